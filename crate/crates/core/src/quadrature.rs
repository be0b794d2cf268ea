//! Triangle quadrature rules.
//!
//! Assembly uses a fixed symmetric 12-point rule exact for polynomials of
//! total degree 6. A Gauss product (conical) rule of arbitrary degree backs
//! the quadrature-sufficiency checks and high-order reference integrals.

/// Quadrature rule on the reference triangle, stored in barycentric
/// coordinates with weights normalized to sum to one, so that
/// `integral = area * sum_q w_q f(x_q)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Symmetric 12-point rule, exact for total degree 6 (Dunavant).
    pub fn degree6() -> Self {
        let mut points = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        let mut orbit3 = |a: f64, w: f64| {
            let b = (1.0 - a) / 2.0;
            points.push([a, b, b]);
            points.push([b, a, b]);
            points.push([b, b, a]);
            weights.extend_from_slice(&[w, w, w]);
        };
        orbit3(0.873821971016996, 0.050844906370207);
        orbit3(0.501426509658179, 0.116786275726379);
        let (a, b, c) = (0.636502499121399, 0.310352451033785, 0.053145049844816);
        let w = 0.082851075618374;
        for perm in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            points.push(perm);
            weights.push(w);
        }
        TriangleRule { points, weights }
    }

    /// Conical Gauss product rule exact for the requested total degree.
    pub fn conical(degree: usize) -> Self {
        let n_t = degree / 2 + 1;
        let n_y = (degree + 1) / 2 + 1;
        let (t_nodes, t_weights) = gauss_legendre_01(n_t);
        let (y_nodes, y_weights) = gauss_legendre_01(n_y);
        let mut points = Vec::with_capacity(n_t * n_y);
        let mut weights = Vec::with_capacity(n_t * n_y);
        for (y, wy) in y_nodes.iter().zip(&y_weights) {
            for (t, wt) in t_nodes.iter().zip(&t_weights) {
                let x = t * (1.0 - y);
                points.push([1.0 - x - y, x, *y]);
                weights.push(2.0 * wt * wy * (1.0 - y));
            }
        }
        TriangleRule { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton iteration on P_n over [-1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map to [0, 1]; reverse so nodes come out ascending
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
