//! Gaussian expectations: Gauss-Hermite rules and an adaptive Gauss-Kronrod
//! integrator for integrands with kinks.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::prior::SignalPrior;
use crate::special::phi;

/// Nodes and weights for E f(Z), Z ~ N(0, 1). Weights sum to one.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl Quadrature {
    /// Gauss-Hermite rule of the given order rescaled to the unit-variance
    /// Gaussian weight. Exact for polynomials of degree 2 order - 1.
    pub fn gauss_hermite(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        // Physicists' rule integrates against exp(-x^2); map to N(0, 1).
        let sqrt_pi = PI.sqrt();
        let mut nodes: Vec<f64> = x.iter().map(|v| v * 2f64.sqrt()).collect();
        let mut weights: Vec<f64> = w.iter().map(|v| v / sqrt_pi).collect();
        nodes.reverse();
        weights.reverse();
        Quadrature { nodes, weights, order }
    }

    /// E f(Z) by the rule.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::gauss_hermite(96)
    }
}

// Gauss-Kronrod 7-15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Most panels [`integrate_adaptive`] will keep.
pub const MAX_PANELS: usize = 2000;

struct Panel {
    lo: f64,
    hi: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err.total_cmp(&o.err).is_eq()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss-Kronrod integral of f on [a, b]: the panel with
/// the largest error estimate is bisected until the summed estimate drops
/// below `abs_tol` (or below round-off relative to the integral of |f|), or
/// [`MAX_PANELS`] panels are in use.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    use std::collections::BinaryHeap;
    let panels = 8;
    let mut heap = BinaryHeap::with_capacity(2 * MAX_PANELS);
    let (mut abs_sum, mut err_sum) = (0.0, 0.0);
    for i in 0..panels {
        let lo = a + (b - a) * i as f64 / panels as f64;
        let hi = a + (b - a) * (i + 1) as f64 / panels as f64;
        let (val, err) = gk15(f, lo, hi);
        abs_sum += val.abs();
        err_sum += err;
        heap.push(Panel { lo, hi, val, err });
    }
    while heap.len() < MAX_PANELS {
        if err_sum <= abs_tol.max(1e-14 * abs_sum) {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            heap.push(worst);
            break;
        }
        abs_sum -= worst.val.abs();
        err_sum -= worst.err;
        for (lo, hi) in [(worst.lo, mid), (mid, worst.hi)] {
            let (val, err) = gk15(f, lo, hi);
            abs_sum += val.abs();
            err_sum += err;
            heap.push(Panel { lo, hi, val, err });
        }
    }
    heap.iter().map(|p| p.val).sum()
}

/// Half-width of the z range used for expectations over N(0, 1).
pub const Z_RANGE: f64 = 12.0;

/// E g(Z) for Z ~ N(0, 1) with an adaptive rule that tolerates kinks in g.
pub fn gaussian_expect_adaptive<G: Fn(f64) -> f64>(g: G, abs_tol: f64) -> f64 {
    integrate_adaptive(&|z: f64| g(z) * phi(z), -Z_RANGE, Z_RANGE, abs_tol)
}

/// Absolute tolerance of the inner z integrals in [`expect_2d`].
pub const INNER_TOL: f64 = 1e-13;

/// Absolute tolerance of the outer beta_bar integrals in [`expect_2d`].
pub const OUTER_TOL: f64 = 1e-12;

/// E f(z, beta_bar) with z ~ N(0, 1) independent of beta_bar ~ prior.
///
/// Both axes are integrated adaptively. After the z integral the integrand
/// is smooth in beta_bar but varies on the scale 1 / zeta, which a fixed
/// Gauss-Hermite rule under-resolves once zeta is large. Dirac atoms are
/// evaluated exactly.
pub fn expect_2d<F: Fn(f64, f64) -> f64>(prior: &SignalPrior, f: F) -> Result<f64> {
    expect_2d_split(prior, f, |_| Vec::new())
}

/// [`expect_2d`] with the z axis split at `breaks(beta_bar)`, the points
/// where f(., beta_bar) has kinks or jumps.
pub fn expect_2d_split<F, B>(prior: &SignalPrior, f: F, breaks: B) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Vec<f64>,
{
    let inner = |b: f64| gaussian_expect_split(|z| f(z, b), &breaks(b), INNER_TOL);
    let mut total = 0.0;
    for c in prior.components() {
        if c.weight == 0.0 {
            continue;
        }
        let part = if c.var == 0.0 {
            inner(c.mean)
        } else {
            let s = c.var.sqrt();
            gaussian_expect_adaptive(|x| inner(c.mean + s * x), OUTER_TOL)
        };
        total += c.weight * part;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("expect_2d integrand"));
    }
    Ok(total)
}

/// E g(Z) with the range cut at the given break points.
pub fn gaussian_expect_split<G: Fn(f64) -> f64>(g: G, breaks: &[f64], abs_tol: f64) -> f64 {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|b| b.abs() < Z_RANGE).collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.insert(0, -Z_RANGE);
    cuts.push(Z_RANGE);
    let h = |z: f64| g(z) * phi(z);
    let pieces = cuts.len() - 1;
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| integrate_adaptive(&h, w[0], w[1], abs_tol / pieces as f64))
        .sum()
}
