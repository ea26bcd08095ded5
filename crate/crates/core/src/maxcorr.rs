//! Maximal correlation `rho(A, B)`: the second singular value of
//! `p(a, b) / sqrt(p(a) p(b))`.
//!
//! The leading singular pair of that matrix is known in closed form
//! (`sqrt(p_A)`, `sqrt(p_B)`, value 1), so it is removed up front: the
//! spectrum is computed on the centered matrix
//! `C = (p(a, b) - p(a) p(b)) / sqrt(p(a) p(b))`, whose largest singular value
//! is `rho`. This keeps small values of `rho` accurate.

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::nsbox::NoSignalingBox;
use crate::prob::{
    conditional_expectation, JointDistribution, Side, SideFunction, SupportFunction,
};

#[derive(Clone, Debug, PartialEq)]
pub struct RhoResult {
    pub rho: f64,
    /// Zero-mean, unit-variance optimizer on A; absent when `rho == 0`.
    pub optimizer_f: Option<SideFunction>,
    pub optimizer_g: Option<SideFunction>,
}

impl RhoResult {
    fn zero() -> Self {
        RhoResult {
            rho: 0.0,
            optimizer_f: None,
            optimizer_g: None,
        }
    }
}

/// Below this value of `rho` the optimizers are not reported.
const OPTIMIZER_THRESHOLD: f64 = 1e-12;

struct Centered {
    supp_a: Vec<usize>,
    supp_b: Vec<usize>,
    sqrt_pa: Vec<f64>,
    sqrt_pb: Vec<f64>,
    /// `supp_a.len() x supp_b.len()`, row-major.
    c: Vec<f64>,
}

impl Centered {
    fn new(dist: &JointDistribution) -> Option<Self> {
        let supp_a = dist.marginal_support(Side::A);
        let supp_b = dist.marginal_support(Side::B);
        if supp_a.len() < 2 || supp_b.len() < 2 {
            return None;
        }
        let pa = dist.marginal_a();
        let pb = dist.marginal_b();
        let sqrt_pa: Vec<f64> = supp_a.iter().map(|&a| pa[a].sqrt()).collect();
        let sqrt_pb: Vec<f64> = supp_b.iter().map(|&b| pb[b].sqrt()).collect();
        let mut c = Vec::with_capacity(supp_a.len() * supp_b.len());
        for (i, &a) in supp_a.iter().enumerate() {
            for (j, &b) in supp_b.iter().enumerate() {
                let denom = sqrt_pa[i] * sqrt_pb[j];
                c.push((dist.get(a, b) - pa[a] * pb[b]) / denom);
            }
        }
        Some(Centered {
            supp_a,
            supp_b,
            sqrt_pa,
            sqrt_pb,
            c,
        })
    }

    fn rows(&self) -> usize {
        self.supp_a.len()
    }

    fn cols(&self) -> usize {
        self.supp_b.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.cols();
        (0..self.rows())
            .map(|i| (0..m).map(|j| self.c[i * m + j] * v[j]).sum())
            .collect()
    }

    fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        let m = self.cols();
        (0..m)
            .map(|j| (0..self.rows()).map(|i| self.c[i * m + j] * u[i]).sum())
            .collect()
    }

    /// Leading singular triple `(sigma, u, v)` of `C`.
    fn top_singular(&self) -> (f64, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.rows(), self.cols());
        // Gram matrix on the smaller side.
        let (small_is_b, k) = if m <= n { (true, m) } else { (false, n) };
        let mut gram = vec![0.0; k * k];
        for s in 0..k {
            for t in s..k {
                let v = if small_is_b {
                    (0..n).map(|i| self.c[i * m + s] * self.c[i * m + t]).sum()
                } else {
                    (0..m).map(|j| self.c[s * m + j] * self.c[t * m + j]).sum()
                };
                gram[s * k + t] = v;
                gram[t * k + s] = v;
            }
        }
        let (_, w) = symmetric_eigen(&gram, k).max();
        let (mut u, mut v) = if small_is_b {
            (self.apply(&w), w)
        } else {
            let v = self.apply_t(&w);
            (w, v)
        };
        // sigma is read off as a norm rather than the square root of an
        // eigenvalue so that it keeps full relative accuracy when small.
        let sigma = if small_is_b { norm(&u) } else { norm(&v) };
        if sigma > 0.0 {
            if small_is_b {
                u.iter_mut().for_each(|x| *x /= sigma);
            } else {
                v.iter_mut().for_each(|x| *x /= sigma);
            }
        }
        (sigma, u, v)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn side_function(card: usize, support: &[usize], scaled: &[f64], sqrt_p: &[f64]) -> SideFunction {
    let mut out = vec![None; card];
    for ((&s, &x), &r) in support.iter().zip(scaled).zip(sqrt_p) {
        out[s] = Some(x / r);
    }
    SideFunction(out)
}

/// Maximal correlation of a bipartite distribution with its optimizers.
/// Symbols with zero marginal mass are dropped first; if either side then
/// has a single symbol the result is 0.
pub fn rho(dist: &JointDistribution) -> RhoResult {
    let Some(centered) = Centered::new(dist) else {
        return RhoResult::zero();
    };
    let (sigma, u, v) = centered.top_singular();
    let rho = sigma.clamp(0.0, 1.0);
    if rho <= OPTIMIZER_THRESHOLD {
        return RhoResult {
            rho,
            optimizer_f: None,
            optimizer_g: None,
        };
    }
    RhoResult {
        rho,
        optimizer_f: Some(side_function(
            dist.a_card(),
            &centered.supp_a,
            &u,
            &centered.sqrt_pa,
        )),
        optimizer_g: Some(side_function(
            dist.b_card(),
            &centered.supp_b,
            &v,
            &centered.sqrt_pb,
        )),
    }
}

/// `|zeta - alpha beta| / sqrt((1 - alpha^2)(1 - beta^2))` with `0/0 = 0`,
/// where `alpha = p_A(0) - p_A(1)`, `beta = p_B(0) - p_B(1)` and
/// `zeta = sum (-1)^(a+b) p(a, b)`.
pub fn rho_binary_closed_form(dist: &JointDistribution) -> Result<f64> {
    if dist.a_card() != 2 || dist.b_card() != 2 {
        return Err(Error::NotBinary(format!(
            "{}x{} distribution",
            dist.a_card(),
            dist.b_card()
        )));
    }
    let pa = dist.marginal_a();
    let pb = dist.marginal_b();
    let alpha = pa[0] - pa[1];
    let beta = pb[0] - pb[1];
    let zeta = dist.get(0, 0) + dist.get(1, 1) - dist.get(0, 1) - dist.get(1, 0);
    // 1 - alpha^2 = 4 p_A(0) p_A(1), which avoids cancellation near |alpha| = 1.
    let denom = (16.0 * pa[0] * pa[1] * pb[0] * pb[1]).sqrt();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok(((zeta - alpha * beta).abs() / denom).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxRho {
    pub rho: f64,
    pub argmax_input_pair: (usize, usize),
}

/// Values closer than this count as ties in [`rho_box`].
const TIE_TOLERANCE: f64 = 1e-12;

/// `max_{x,y} rho(p(., . | x, y))`; ties (within 1e-12) go to the
/// lexicographically first pair.
pub fn rho_box(b: &NoSignalingBox) -> BoxRho {
    let mut best = BoxRho {
        rho: -1.0,
        argmax_input_pair: (0, 0),
    };
    for (x, y) in b.input_pairs() {
        let joint = b.conditional_joint(x, y).expect("input pair in range");
        let r = rho(&joint).rho;
        if r > best.rho + TIE_TOLERANCE {
            best = BoxRho {
                rho: r,
                argmax_input_pair: (x, y),
            };
        }
    }
    best
}

/// The law `q(x, y) p(a, b | x, y)` viewed as a bipartite distribution of
/// `(a, x)` against `(b, y)`. Composite symbols are `x * a_card + a` and
/// `y * b_card + b`.
pub fn joint_with_inputs(
    b: &NoSignalingBox,
    q_xy: &JointDistribution,
) -> Result<JointDistribution> {
    if q_xy.a_card() != b.x_card() || q_xy.b_card() != b.y_card() {
        return Err(Error::ShapeMismatch(format!(
            "input law is {}x{} but the box takes {}x{} inputs",
            q_xy.a_card(),
            q_xy.b_card(),
            b.x_card(),
            b.y_card()
        )));
    }
    let (ac, bc) = (b.a_card(), b.b_card());
    JointDistribution::from_fn(b.x_card() * ac, b.y_card() * bc, |ax, by| {
        let (x, a) = (ax / ac, ax % ac);
        let (y, bb) = (by / bc, by % bc);
        q_xy.get(x, y) * b.get(x, y, a, bb)
    })
}

/// `rho^2` in variational form: the best ratio `Var_B E_{A|B}[f] / Var[f]`
/// over functions `f` of `A`. The maximizer comes from the same spectral
/// problem; the ratio itself is evaluated with the conditional-expectation
/// operators. Returns `(ratio, f)`.
pub fn rho_squared_variational(dist: &JointDistribution) -> (f64, Option<SideFunction>) {
    let r = rho(dist);
    let Some(f) = r.optimizer_f else {
        return (0.0, None);
    };
    let lifted =
        SupportFunction::from_fn(dist.a_card(), dist.b_card(), |a, _| f.get(a).unwrap_or(0.0));
    let cond = conditional_expectation(dist, &lifted, Side::B).expect("shapes match");
    let ratio = cond.variance(dist.marginal_b()) / f.variance(dist.marginal_a());
    (ratio, Some(f))
}

/// Pearson correlation of `f(A)` and `g(B)`; 0 when either is constant.
pub fn correlation(dist: &JointDistribution, f: &[f64], g: &[f64]) -> f64 {
    let pa = dist.marginal_a();
    let pb = dist.marginal_b();
    let mf: f64 = pa.iter().zip(f).map(|(p, v)| p * v).sum();
    let mg: f64 = pb.iter().zip(g).map(|(p, v)| p * v).sum();
    let vf: f64 = pa.iter().zip(f).map(|(p, v)| p * (v - mf).powi(2)).sum();
    let vg: f64 = pb.iter().zip(g).map(|(p, v)| p * (v - mg).powi(2)).sum();
    if vf <= 0.0 || vg <= 0.0 {
        return 0.0;
    }
    let mut cov = 0.0;
    for (a, b) in dist.support() {
        cov += dist.get(a, b) * (f[a] - mf) * (g[b] - mg);
    }
    cov / (vf * vg).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q_eta(eta: f64) -> JointDistribution {
        JointDistribution::from_fn(2, 2, |a, b| {
            if a == b {
                (1.0 + eta) / 4.0
            } else {
                (1.0 - eta) / 4.0
            }
        })
        .unwrap()
    }

    #[test]
    fn product_has_zero_rho() {
        let p = JointDistribution::product(&[0.2, 0.3, 0.5], &[0.6, 0.4]).unwrap();
        let r = rho(&p);
        assert!(r.rho < 1e-15);
        assert!(r.optimizer_f.is_none());
    }

    #[test]
    fn q_eta_has_rho_eta() {
        for eta in [0.0, 0.1, 0.5, 0.9, 1.0] {
            assert!((rho(&q_eta(eta)).rho - eta).abs() < 1e-14, "eta {eta}");
        }
    }

    #[test]
    fn common_data_has_rho_one() {
        let r = rho(&q_eta(1.0));
        assert!((r.rho - 1.0).abs() < 1e-15);
        let f = r.optimizer_f.unwrap();
        let g = r.optimizer_g.unwrap();
        let fg: f64 = (0..2)
            .map(|a| 0.5 * f.get(a).unwrap() * g.get(a).unwrap())
            .sum();
        assert!((fg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimizer_invariants() {
        let p =
            JointDistribution::new(3, 3, vec![0.2, 0.05, 0.05, 0.02, 0.3, 0.03, 0.1, 0.05, 0.2])
                .unwrap();
        let r = rho(&p);
        let f = r.optimizer_f.unwrap().values_or_zero();
        let g = r.optimizer_g.unwrap().values_or_zero();
        let pa = p.marginal_a();
        let pb = p.marginal_b();
        let ef: f64 = pa.iter().zip(&f).map(|(p, v)| p * v).sum();
        let eg: f64 = pb.iter().zip(&g).map(|(p, v)| p * v).sum();
        let ef2: f64 = pa.iter().zip(&f).map(|(p, v)| p * v * v).sum();
        let eg2: f64 = pb.iter().zip(&g).map(|(p, v)| p * v * v).sum();
        let efg: f64 = p
            .support()
            .iter()
            .map(|&(a, b)| p.get(a, b) * f[a] * g[b])
            .sum();
        assert!(ef.abs() < 1e-12 && eg.abs() < 1e-12);
        assert!((ef2 - 1.0).abs() < 1e-12 && (eg2 - 1.0).abs() < 1e-12);
        assert!((efg - r.rho).abs() < 1e-12);
    }

    #[test]
    fn degenerate_marginal_gives_zero() {
        let p = JointDistribution::new(2, 3, vec![0.0, 0.0, 0.0, 0.2, 0.3, 0.5]).unwrap();
        assert_eq!(rho(&p), RhoResult::zero());
    }

    #[test]
    fn closed_form_cases() {
        assert!((rho_binary_closed_form(&q_eta(0.3)).unwrap() - 0.3).abs() < 1e-15);
        let prod = JointDistribution::product(&[0.3, 0.7], &[0.9, 0.1]).unwrap();
        assert!(rho_binary_closed_form(&prod).unwrap() < 1e-15);
        let pinned = JointDistribution::new(2, 2, vec![0.4, 0.6, 0.0, 0.0]).unwrap();
        assert_eq!(rho_binary_closed_form(&pinned).unwrap(), 0.0);
        let big = JointDistribution::product(&[0.3, 0.7], &[0.2, 0.2, 0.6]).unwrap();
        assert!(rho_binary_closed_form(&big).is_err());
    }

    #[test]
    fn isotropic_box_rho() {
        for eta in [0.0, 0.4, std::f64::consts::FRAC_1_SQRT_2, 1.0] {
            let r = rho_box(&NoSignalingBox::isotropic(eta).unwrap());
            assert!((r.rho - eta).abs() < 1e-14);
            assert_eq!(r.argmax_input_pair, (0, 0));
        }
    }

    #[test]
    fn single_input_law_reduces_to_conditional() {
        let b = NoSignalingBox::isotropic(0.6).unwrap();
        let q = JointDistribution::new(2, 2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let j = joint_with_inputs(&b, &q).unwrap();
        assert!((rho(&j).rho - 0.6).abs() < 1e-14);
        let wrong = JointDistribution::product(&[1.0 / 3.0; 3], &[0.5, 0.5]).unwrap();
        assert!(joint_with_inputs(&b, &wrong).is_err());
    }

    #[test]
    fn variational_matches_spectral() {
        let p = JointDistribution::new(3, 2, vec![0.1, 0.25, 0.2, 0.05, 0.3, 0.1]).unwrap();
        let (ratio, _) = rho_squared_variational(&p);
        assert!((ratio - rho(&p).rho.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn correlation_of_optimizers_is_rho() {
        let p = JointDistribution::new(2, 3, vec![0.1, 0.25, 0.2, 0.05, 0.3, 0.1]).unwrap();
        let r = rho(&p);
        let c = correlation(
            &p,
            &r.optimizer_f.unwrap().values_or_zero(),
            &r.optimizer_g.unwrap().values_or_zero(),
        );
        assert!((c - r.rho).abs() < 1e-12);
    }
}
