//! The maximal-correlation ribbon: the set of `(lambda1, lambda2)` with
//! `Var[f] >= lambda1 Var_A E_{B|A}[f] + lambda2 Var_B E_{A|B}[f]` for every
//! real `f(a, b)`.
//!
//! In coordinates `u = sqrt(p) f` over the support the constraint reads
//! `u^T Q u >= 0` on `u` orthogonal to `e = sqrt(p)`, with
//! `Q = I - lambda1 P_A - lambda2 P_B` and `P_A`, `P_B` the orthogonal
//! projections realizing the two conditional means. `e` is an eigenvector of
//! `Q` with eigenvalue `1 - lambda1 - lambda2`; it is shifted to eigenvalue 1
//! by a rank-one update, after which the minimum eigenvalue of the full
//! matrix decides membership.

use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::hc_ribbon::upsilon;
use crate::maxcorr::{rho, rho_box};
use crate::nsbox::NoSignalingBox;
use crate::prob::{
    conditional_expectation, expectation, JointDistribution, Side, SupportFunction, SUPPORT_EPSILON,
};

/// Minimum eigenvalues at or above `-PSD_TOLERANCE` count as inside.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Offset `epsilon` in the sequence `lambda1 = 1 - (rho^2 + epsilon)/n`, `lambda2 = 1/n`.
pub const INF_RATIO_EPSILON: f64 = 1e-6;

/// Step used by the central finite difference in [`perturbation_second_order`].
pub const PERTURBATION_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RibbonPoint {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl RibbonPoint {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(RibbonPoint { lambda1, lambda2 })
    }

    /// Points with `lambda1 + lambda2 <= 1` belong to every ribbon.
    pub fn in_triangle(&self) -> bool {
        self.lambda1 + self.lambda2 <= 1.0
    }

    /// The `k x k` grid `{0, 1/(k-1), ..., 1}^2`, `lambda2` varying fastest.
    pub fn grid(k: usize) -> Vec<RibbonPoint> {
        let step = |i: usize| {
            if k <= 1 {
                0.0
            } else {
                i as f64 / (k - 1) as f64
            }
        };
        (0..k)
            .flat_map(|i| {
                (0..k).map(move |j| RibbonPoint {
                    lambda1: step(i),
                    lambda2: step(j),
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McVerdict {
    pub inside: bool,
    /// Smallest eigenvalue of the quadratic form on zero-mean functions,
    /// normalized by `E[f^2]`. Doubles as the signed margin.
    pub min_eigenvalue: f64,
    /// A zero-mean `f` with `Q(f) = min_eigenvalue * E[f^2]`, reported when outside.
    pub witness_f: Option<SupportFunction>,
    /// For box queries, the input pair that attains `min_eigenvalue`.
    pub input_pair: Option<(usize, usize)>,
}

struct Form {
    cells: Vec<(usize, usize)>,
    sqrt_p: Vec<f64>,
    matrix: Vec<f64>,
}

fn assemble(dist: &JointDistribution, pt: RibbonPoint) -> Form {
    let cells: Vec<(usize, usize)> = dist.support();
    let n = cells.len();
    let sqrt_p: Vec<f64> = cells.iter().map(|&(a, b)| dist.get(a, b).sqrt()).collect();
    let pa = dist.marginal_a();
    let pb = dist.marginal_b();
    let shift = pt.lambda1 + pt.lambda2;
    let mut matrix = vec![0.0; n * n];
    for k in 0..n {
        for l in k..n {
            let (ak, bk) = cells[k];
            let (al, bl) = cells[l];
            let ee = sqrt_p[k] * sqrt_p[l];
            let mut v = shift * ee;
            if k == l {
                v += 1.0;
            }
            if ak == al {
                v -= pt.lambda1 * ee / pa[ak];
            }
            if bk == bl {
                v -= pt.lambda2 * ee / pb[bk];
            }
            matrix[k * n + l] = v;
            matrix[l * n + k] = v;
        }
    }
    Form {
        cells,
        sqrt_p,
        matrix,
    }
}

/// Membership of `pt` in the ribbon of a single distribution.
pub fn mc_membership(dist: &JointDistribution, pt: RibbonPoint) -> McVerdict {
    let form = assemble(dist, pt);
    let n = form.cells.len();
    if n <= 1 {
        return McVerdict {
            inside: true,
            min_eigenvalue: 1.0,
            witness_f: None,
            input_pair: None,
        };
    }
    let (min_eigenvalue, u) = symmetric_eigen(&form.matrix, n).min();
    let inside = min_eigenvalue >= -PSD_TOLERANCE;
    let witness_f = (!inside).then(|| {
        let mut values = vec![0.0; dist.a_card() * dist.b_card()];
        for ((&(a, b), &ui), &s) in form.cells.iter().zip(&u).zip(&form.sqrt_p) {
            values[a * dist.b_card() + b] = ui / s;
        }
        SupportFunction::new(dist.a_card(), dist.b_card(), values).expect("shape")
    });
    McVerdict {
        inside,
        min_eigenvalue,
        witness_f,
        input_pair: None,
    }
}

/// Values closer than this count as ties when picking the worst input pair.
const TIE_TOLERANCE: f64 = 1e-12;

/// Box ribbon: the intersection over input pairs. The verdict carries the
/// worst pair (first in lexicographic order on ties).
pub fn mc_membership_box(b: &NoSignalingBox, pt: RibbonPoint) -> McVerdict {
    let mut worst: Option<McVerdict> = None;
    for (x, y) in b.input_pairs() {
        let mut v = mc_membership(&b.conditional_joint(x, y).expect("in range"), pt);
        v.input_pair = Some((x, y));
        if worst
            .as_ref()
            .is_none_or(|w| v.min_eigenvalue < w.min_eigenvalue - TIE_TOLERANCE)
        {
            worst = Some(v);
        }
    }
    worst.expect("a box has at least one input pair")
}

fn boundary_by_bisection(lambda2: f64, tol: f64, inside: impl Fn(RibbonPoint) -> bool) -> f64 {
    let at = |l1: f64| RibbonPoint {
        lambda1: l1,
        lambda2,
    };
    if inside(at(1.0)) {
        return 1.0;
    }
    let (mut lo, mut hi) = (1.0 - lambda2, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if inside(at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Largest `lambda1` with `(lambda1, lambda2)` in the ribbon, to within `tol`.
/// The ribbon is convex and contains the triangle, so the search runs over
/// `[1 - lambda2, 1]`.
pub fn mc_boundary_slice(dist: &JointDistribution, lambda2: f64, tol: f64) -> Result<f64> {
    RibbonPoint::new(0.0, lambda2)?;
    Ok(boundary_by_bisection(lambda2, tol, |pt| {
        mc_membership(dist, pt).inside
    }))
}

pub fn mc_boundary_slice_box(b: &NoSignalingBox, lambda2: f64, tol: f64) -> Result<f64> {
    RibbonPoint::new(0.0, lambda2)?;
    Ok(boundary_by_bisection(lambda2, tol, |pt| {
        mc_membership_box(b, pt).inside
    }))
}

/// Slice tolerance used by the inf-ratio estimates.
const SLICE_TOLERANCE: f64 = 1e-13;

/// `lambda2 = 1/n` for `n = 1, 10, 100, ...` up to and including `n_max`.
fn slice_denominators(n_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = 1usize;
    while n < n_max {
        out.push(n);
        n = n.saturating_mul(10);
    }
    out.push(n_max.max(1));
    out
}

/// Components of the inf-ratio estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfRatio {
    /// `min (1 - lambda1*)/lambda2` over boundary slices at `lambda2 = 1/n`.
    pub slices: f64,
    /// Smallest `(rho^2 + epsilon)` along the sequence
    /// `(1 - (rho^2 + epsilon)/n, 1/n)` whose point the membership test
    /// accepts; `None` if no point was accepted.
    pub sequence: Option<f64>,
    /// The smaller of the two.
    pub estimate: f64,
}

fn inf_ratio(
    n_max: usize,
    rho_sq: f64,
    slice: impl Fn(f64) -> f64,
    inside: impl Fn(RibbonPoint) -> bool,
) -> InfRatio {
    let dens = slice_denominators(n_max);
    let mut slices = f64::INFINITY;
    let mut sequence: Option<f64> = None;
    for &n in &dens {
        let lambda2 = 1.0 / n as f64;
        let l1 = slice(lambda2);
        slices = slices.min((1.0 - l1) / lambda2);
        let c = rho_sq + INF_RATIO_EPSILON;
        let l1_seq = 1.0 - c * lambda2;
        if l1_seq >= 0.0
            && inside(RibbonPoint {
                lambda1: l1_seq,
                lambda2,
            })
        {
            sequence = Some(sequence.map_or(c, |s: f64| s.min(c)));
        }
    }
    let estimate = sequence.map_or(slices, |s| s.min(slices));
    InfRatio {
        slices,
        sequence,
        estimate,
    }
}

/// Numerical estimate of `inf (1 - lambda1)/lambda2` over the ribbon.
pub fn mc_inf_ratio(dist: &JointDistribution, n_max: usize) -> InfRatio {
    let rho_sq = rho(dist).rho.powi(2);
    inf_ratio(
        n_max,
        rho_sq,
        |l2| boundary_by_bisection(l2, SLICE_TOLERANCE, |pt| mc_membership(dist, pt).inside),
        |pt| mc_membership(dist, pt).inside,
    )
}

/// Box version of [`mc_inf_ratio`], over the intersection of the per-input ribbons.
pub fn mc_inf_ratio_box(b: &NoSignalingBox, n_max: usize) -> InfRatio {
    let rho_sq = rho_box(b).rho.powi(2);
    inf_ratio(
        n_max,
        rho_sq,
        |l2| boundary_by_bisection(l2, SLICE_TOLERANCE, |pt| mc_membership_box(b, pt).inside),
        |pt| mc_membership_box(b, pt).inside,
    )
}

/// `D = E[f^2] - lambda1 E_A[(E_{B|A} f)^2] - lambda2 E_B[(E_{A|B} f)^2]`.
pub fn quadratic_form(
    dist: &JointDistribution,
    f: &SupportFunction,
    pt: RibbonPoint,
) -> Result<f64> {
    let f2 = expectation(dist, &f.map(|v| v * v))?;
    let ca = conditional_expectation(dist, f, Side::A)?;
    let cb = conditional_expectation(dist, f, Side::B)?;
    let second = |c: &crate::prob::SideFunction, m: &[f64]| -> f64 {
        c.0.iter()
            .zip(m)
            .filter_map(|(v, &p)| v.map(|v| p * v * v))
            .sum()
    };
    Ok(f2
        - pt.lambda1 * second(&ca, dist.marginal_a())
        - pt.lambda2 * second(&cb, dist.marginal_b()))
}

/// Rescales `f` on the support to `E[f] = 0`, `E[f^2] = 1`. Fails for
/// functions that are constant on the support.
pub fn standardize(dist: &JointDistribution, f: &SupportFunction) -> Result<SupportFunction> {
    let mean = expectation(dist, f)?;
    let centered = f.map(|v| v - mean);
    let var = expectation(dist, &centered.map(|v| v * v))?;
    if var <= SUPPORT_EPSILON {
        return Err(Error::OutOfRange(
            "function is constant on the support".into(),
        ));
    }
    let sd = var.sqrt();
    Ok(centered.map(|v| v / sd))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationCheck {
    /// The quadratic form `D`.
    pub quadratic_form: f64,
    /// Central second difference of `eps -> Upsilon(p (1 + eps f))` at 0.
    pub finite_difference: f64,
}

/// Compares the second derivative of the entropy functional `Upsilon`
/// along `p (1 + eps f)` with the quadratic form `D`. `f` must be
/// standardized.
pub fn perturbation_second_order(
    dist: &JointDistribution,
    f: &SupportFunction,
    pt: RibbonPoint,
) -> Result<PerturbationCheck> {
    let mean = expectation(dist, f)?;
    let second = expectation(dist, &f.map(|v| v * v))?;
    if mean.abs() > 1e-9 || (second - 1.0).abs() > 1e-9 {
        return Err(Error::OutOfRange(format!(
            "f must have E[f] = 0 and E[f^2] = 1, got {mean:e} and {second}"
        )));
    }
    let max_abs = dist
        .support()
        .iter()
        .map(|&(a, b)| f.get(a, b).abs())
        .fold(0.0, f64::max);
    let max_epsilon = if max_abs > 0.0 {
        1.0 / max_abs
    } else {
        f64::INFINITY
    };
    let eps = PERTURBATION_STEP;
    if eps > max_epsilon {
        return Err(Error::PerturbationLeavesSimplex { max_epsilon });
    }
    let perturbed = |e: f64| -> Result<f64> {
        let q = JointDistribution::from_fn(dist.a_card(), dist.b_card(), |a, b| {
            let p = dist.get(a, b);
            if dist.in_support(a, b) {
                p * (1.0 + e * f.get(a, b))
            } else {
                p
            }
        })?;
        Ok(upsilon(&q, pt))
    };
    let finite_difference =
        (perturbed(eps)? - 2.0 * perturbed(0.0)? + perturbed(-eps)?) / (eps * eps);
    Ok(PerturbationCheck {
        quadratic_form: quadratic_form(dist, f, pt)?,
        finite_difference,
    })
}

/// One grid point of a ribbon scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub inside: bool,
    /// Minimum eigenvalue for the MC ribbon; best channel objective for the
    /// HC ribbon (negative exactly when a violation was found).
    pub margin: f64,
    /// `heuristic` or `exact` for HC scans.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<&'static str>,
}

impl ScanRow {
    /// CSV with columns `lambda1,lambda2,inside,margin`, plus `certified`
    /// when the rows carry it.
    pub fn to_csv(rows: &[ScanRow]) -> String {
        use crate::report::{format_sig, to_csv};
        let with_cert = rows.iter().any(|r| r.certified.is_some());
        let mut header = vec!["lambda1", "lambda2", "inside", "margin"];
        if with_cert {
            header.push("certified");
        }
        let records = rows.iter().map(|r| {
            let mut rec = vec![
                format_sig(r.lambda1),
                format_sig(r.lambda2),
                r.inside.to_string(),
                format_sig(r.margin),
            ];
            if with_cert {
                rec.push(r.certified.unwrap_or("").to_string());
            }
            rec
        });
        to_csv(&header, records).expect("in-memory csv")
    }
}

/// Membership of every point of the `k x k` grid in the box ribbon.
pub fn scan_box(b: &NoSignalingBox, k: usize) -> Vec<ScanRow> {
    RibbonPoint::grid(k)
        .into_iter()
        .map(|pt| {
            let v = mc_membership_box(b, pt);
            ScanRow {
                lambda1: pt.lambda1,
                lambda2: pt.lambda2,
                inside: v.inside,
                margin: v.min_eigenvalue,
                certified: None,
            }
        })
        .collect()
}
