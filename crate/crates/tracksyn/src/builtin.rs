//! Built-in example system definitions.
//!
//! * `lti` — fully actuated linear plant tracking a sinusoidal trajectory;
//!   the fixed point is exact after one corrective iteration and the gain
//!   has the closed form `K = B^-1 (A - Δ)`.
//! * `pendulum2` — fully actuated pendulum `(ẋ1, ẋ2) = (x2 + u1, -sin x1 + u2)`
//!   tracking `(sin t, cos t)`; the remainder is the Lagrange tail of the
//!   sine and obeys `|r| <= |e|^2 / 2`.
//! * `paper2d` — two-state plant with a scalar multiplicative disturbance
//!   and a single input; underactuated (m = 1 < n = 2), augmented with the
//!   column `l2 = (1, 0)`. With `w = -2` the associated law drives the
//!   error to zero; with `w = 0` it is only Lyapunov stable.
//! * `chained3` — two-input chained system `ẋ = (u1, u2, x2 u1)`;
//!   underactuated, augmented with `l3 = (0, 0, 1)`. The static associated
//!   law stalls at a nonzero third state, a time-varying sinusoidal law
//!   (see [`crate::sim::sinusoid_reference_controller`]) does not.
//! * `driftless2` — fully actuated driftless plant holding a constant
//!   set-point; its remainder is bilinear in `(e, v)`.

pub const NAMES: [&str; 5] = ["lti", "pendulum2", "paper2d", "chained3", "driftless2"];

pub const LTI: &str = "\
[system]
n = 2
m = 2
p = 0
f1 = x2 + u1
f2 = -2*x1 - x2 + u2

[trajectory]
xd1 = sin(t)
xd2 = cos(t)
ud1 = 0
ud2 = sin(t) + cos(t)

[synthesis]
eigenvalues = -1, -2
margin = 0.5

[simulate]
x0 = 0.5, 1.5
T = 20
dt = 0.001
";

pub const PENDULUM2: &str = "\
[system]
n = 2
m = 2
p = 0
f1 = x2 + u1
f2 = -sin(x1) + u2

[trajectory]
xd1 = sin(t)
xd2 = cos(t)
ud1 = 0
ud2 = sin(sin(t)) - sin(t)

[synthesis]
eigenvalues = -1, -2
margin = 0.5

[simulate]
x0 = 0.1, 1.1
T = 20
dt = 0.001
";

pub const PAPER2D: &str = "\
[system]
n = 2
m = 1
p = 1
f1 = x1*w1 + x2 + u1
f2 = x2 + u1

[trajectory]
xd1 = 0
xd2 = 0
ud1 = 0

[disturbance]
w1 = -2

[synthesis]
eigenvalues = -1, -1
margin = 0.5
l2 = 1, 0

[simulate]
x0 = 1, 1
T = 20
dt = 0.001
";

pub const CHAINED3: &str = "\
[system]
n = 3
m = 2
p = 0
f1 = u1
f2 = u2
f3 = x2*u1

[trajectory]
xd1 = 0
xd2 = 0
xd3 = 0
ud1 = 0
ud2 = 0

[synthesis]
eigenvalues = -1, -1, -1
margin = 0.5
l3 = 0, 0, 1

[simulate]
x0 = 1, 1, 1
T = 15
dt = 0.001
";

pub const DRIFTLESS2: &str = "\
[system]
n = 2
m = 2
p = 0
f1 = u1
f2 = x2*u1 + u2

[trajectory]
xd1 = 1
xd2 = 1
ud1 = 0
ud2 = 0

[synthesis]
eigenvalues = -1, -1
margin = 0.5

[simulate]
x0 = 1.3, 0.6
T = 20
dt = 0.001
";

/// Returns the system definition text for a built-in example name.
pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "lti" => LTI,
        "pendulum2" => PENDULUM2,
        "paper2d" => PAPER2D,
        "chained3" => CHAINED3,
        "driftless2" => DRIFTLESS2,
        _ => return None,
    })
}
