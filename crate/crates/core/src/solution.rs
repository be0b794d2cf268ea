//! Manufactured solutions with analytically known data.

use crate::mesh::{Domain, Point};

/// Exact solution data for a Stokes problem: velocity, its gradient, the
/// pressure, and the derived right-hand sides `f = -Laplace(u) + grad p` and
/// `g = div u`. Both built-in velocities vanish on the domain boundary and
/// both pressures have zero mean.
pub struct ManufacturedSolution {
    pub velocity: Box<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
    /// Gradient rows per component: `grad[c][d] = d u_c / d x_d`.
    pub velocity_grad: Box<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>,
    pub pressure: Box<dyn Fn(Point) -> f64 + Send + Sync>,
    pub body_force: Box<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
    pub divergence: Box<dyn Fn(Point) -> f64 + Send + Sync>,
}

/// The built-in solution used by the experiments on each domain.
///
/// Unit square: `u1 = u2 = sin(pi x) sin(pi y) / (2 pi^2)`. L-shape:
/// `u1 = u2 = r^(2/3) sin(2 theta / 3) (1 - x^2)(1 - y^2)` with the angle
/// measured from the re-entrant edge `{x > 0, y = 0}` so the velocity
/// vanishes on both edges meeting at the corner. Both use
/// `p = 2/3 - x^2 - y^2`.
pub fn builtin_solution(domain: Domain) -> ManufacturedSolution {
    match domain {
        Domain::UnitSquare => square_sine(),
        Domain::LShape => lshape_singular(),
    }
}

fn square_sine() -> ManufacturedSolution {
    use std::f64::consts::PI;
    let u = |p: Point| {
        let s = (PI * p[0]).sin() * (PI * p[1]).sin() / (2.0 * PI * PI);
        [s, s]
    };
    let grad = |p: Point| {
        let gx = (PI * p[0]).cos() * (PI * p[1]).sin() / (2.0 * PI);
        let gy = (PI * p[0]).sin() * (PI * p[1]).cos() / (2.0 * PI);
        [[gx, gy], [gx, gy]]
    };
    ManufacturedSolution {
        velocity: Box::new(u),
        velocity_grad: Box::new(grad),
        pressure: Box::new(|p| 2.0 / 3.0 - p[0] * p[0] - p[1] * p[1]),
        body_force: Box::new(|p: Point| {
            // -Laplace(u_c) = sin(pi x) sin(pi y) for both components
            let s = (PI * p[0]).sin() * (PI * p[1]).sin();
            [s - 2.0 * p[0], s - 2.0 * p[1]]
        }),
        divergence: Box::new(|p: Point| {
            ((PI * p[0]).cos() * (PI * p[1]).sin() + (PI * p[0]).sin() * (PI * p[1]).cos())
                / (2.0 * PI)
        }),
    }
}

/// Angle in [0, 3 pi / 2] measured from the edge {x > 0, y = 0}; continuous
/// across the negative x-axis, which is interior to the L-shape.
fn lshape_theta(p: Point) -> f64 {
    let t = p[1].atan2(p[0]);
    if t < 0.0 {
        t + 2.0 * std::f64::consts::PI
    } else {
        t
    }
}

/// r^(2/3) sin(2 theta / 3) and its Cartesian gradient. Harmonic away from
/// the corner; the gradient blows up like r^(-1/3) there.
fn singular_part(p: Point) -> (f64, [f64; 2]) {
    let r2 = p[0] * p[0] + p[1] * p[1];
    if r2 == 0.0 {
        return (0.0, [0.0, 0.0]);
    }
    let r = r2.sqrt();
    let theta = lshape_theta(p);
    let phi = r.powf(2.0 / 3.0) * (2.0 * theta / 3.0).sin();
    let rm13 = r.powf(-1.0 / 3.0);
    let gx = -(2.0 / 3.0) * rm13 * (theta / 3.0).sin();
    let gy = (2.0 / 3.0) * rm13 * (theta / 3.0).cos();
    (phi, [gx, gy])
}

fn lshape_singular() -> ManufacturedSolution {
    let bubble = |p: Point| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]);
    let bubble_grad = |p: Point| {
        [
            -2.0 * p[0] * (1.0 - p[1] * p[1]),
            -2.0 * p[1] * (1.0 - p[0] * p[0]),
        ]
    };
    let bubble_laplace =
        |p: Point| -2.0 * (1.0 - p[1] * p[1]) - 2.0 * (1.0 - p[0] * p[0]);

    let u = move |p: Point| {
        let (phi, _) = singular_part(p);
        let v = phi * bubble(p);
        [v, v]
    };
    let grad = move |p: Point| {
        let (phi, dphi) = singular_part(p);
        let w = bubble(p);
        let dw = bubble_grad(p);
        let g = [dphi[0] * w + phi * dw[0], dphi[1] * w + phi * dw[1]];
        [g, g]
    };
    let force = move |p: Point| {
        // Laplace(phi w) = 2 grad(phi).grad(w) + phi Laplace(w), phi harmonic
        let (phi, dphi) = singular_part(p);
        let dw = bubble_grad(p);
        let lap = 2.0 * (dphi[0] * dw[0] + dphi[1] * dw[1]) + phi * bubble_laplace(p);
        [-lap - 2.0 * p[0], -lap - 2.0 * p[1]]
    };
    let div = move |p: Point| {
        let (phi, dphi) = singular_part(p);
        let w = bubble(p);
        let dw = bubble_grad(p);
        (dphi[0] * w + phi * dw[0]) + (dphi[1] * w + phi * dw[1])
    };
    ManufacturedSolution {
        velocity: Box::new(u),
        velocity_grad: Box::new(grad),
        pressure: Box::new(|p| 2.0 / 3.0 - p[0] * p[0] - p[1] * p[1]),
        body_force: Box::new(force),
        divergence: Box::new(div),
    }
}
