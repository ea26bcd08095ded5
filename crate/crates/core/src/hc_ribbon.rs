//! The hypercontractivity ribbon: the set of `(lambda1, lambda2)` with
//! `lambda1 I(U;A) + lambda2 I(U;B) <= I(U;AB)` for every channel `p_{U|AB}`.
//!
//! Exclusion is certified by an explicit channel (or, for the norm form, an
//! explicit pair of functions) whose violation is recomputed from scratch
//! before it is reported. Inclusion can only be reported heuristically: it
//! means a multistart search found no violation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maxcorr::rho;
use crate::mc_ribbon::{mc_membership, RibbonPoint, ScanRow};
use crate::nsbox::NoSignalingBox;
use crate::prob::{entropy_nats, JointDistribution, TableDistribution};
use crate::seeds::derive_seeds;

pub const HC_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_RESTARTS: usize = 64;
pub const DEFAULT_MAX_ITERATIONS: usize = 2000;

const PROB_FLOOR: f64 = 1e-300;
const NORM_FLOOR: f64 = 1e-12;
const NORM_ITERATIONS: usize = 500;

/// `lambda1 H(A) + lambda2 H(B) - H(AB)` in nats.
pub fn upsilon(dist: &JointDistribution, pt: RibbonPoint) -> f64 {
    pt.lambda1 * dist.entropy_a() + pt.lambda2 * dist.entropy_b() - dist.entropy_joint()
}

/// A conditional law `p(u | a, b)`, stored as `w[(a * b_card + b) * u_card + u]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub a_card: usize,
    pub b_card: usize,
    pub u_card: usize,
    pub w: Vec<f64>,
}

impl Channel {
    pub fn new(a_card: usize, b_card: usize, u_card: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != a_card * b_card * u_card {
            return Err(Error::ShapeMismatch(format!(
                "channel needs {} entries, got {}",
                a_card * b_card * u_card,
                w.len()
            )));
        }
        for (row, chunk) in w.chunks(u_card).enumerate() {
            let total: f64 = chunk.iter().sum();
            if chunk.iter().any(|&v| v < 0.0 || !v.is_finite()) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!(
                    "channel row {row} is not a probability vector"
                )));
            }
        }
        Ok(Channel {
            a_card,
            b_card,
            u_card,
            w,
        })
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, u: usize) -> f64 {
        self.w[(a * self.b_card + b) * self.u_card + u]
    }

    /// The joint law of `(A, B, U)` as a labelled table.
    pub fn joint_table(&self, dist: &JointDistribution) -> Result<TableDistribution> {
        let mut probs = Vec::with_capacity(self.w.len());
        for a in 0..self.a_card {
            for b in 0..self.b_card {
                for u in 0..self.u_card {
                    probs.push(dist.get(a, b) * self.get(a, b, u));
                }
            }
        }
        TableDistribution::new(
            vec![("A", self.a_card), ("B", self.b_card), ("U", self.u_card)],
            probs,
        )
    }
}

/// The three mutual informations of a channel and
/// `G = I(U;AB) - lambda1 I(U;A) - lambda2 I(U;B)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelTerms {
    pub i_u_ab: f64,
    pub i_u_a: f64,
    pub i_u_b: f64,
    pub objective: f64,
}

/// Evaluates the objective through labelled-table mutual informations. This
/// is the independent recomputation used to confirm witnesses.
pub fn channel_objective(
    dist: &JointDistribution,
    ch: &Channel,
    pt: RibbonPoint,
) -> Result<ChannelTerms> {
    if ch.a_card != dist.a_card() || ch.b_card != dist.b_card() {
        return Err(Error::ShapeMismatch(
            "channel and distribution alphabets differ".into(),
        ));
    }
    let t = ch.joint_table(dist)?;
    let i_u_ab = t.mutual_information(&["U"], &["A", "B"], &[])?;
    let i_u_a = t.mutual_information(&["U"], &["A"], &[])?;
    let i_u_b = t.mutual_information(&["U"], &["B"], &[])?;
    Ok(ChannelTerms {
        i_u_ab,
        i_u_a,
        i_u_b,
        objective: i_u_ab - pt.lambda1 * i_u_a - pt.lambda2 * i_u_b,
    })
}

/// `E_U[Upsilon(p_{AB|U})] - Upsilon(p_{AB})`, which equals the channel objective.
pub fn envelope_gap(dist: &JointDistribution, ch: &Channel, pt: RibbonPoint) -> Result<f64> {
    let mut total = 0.0;
    for u in 0..ch.u_card {
        let mass: f64 = dist
            .support()
            .iter()
            .map(|&(a, b)| dist.get(a, b) * ch.get(a, b, u))
            .sum();
        if mass <= 0.0 {
            continue;
        }
        let cond = JointDistribution::from_fn(dist.a_card(), dist.b_card(), |a, b| {
            dist.get(a, b) * ch.get(a, b, u) / mass
        })?;
        total += mass * upsilon(&cond, pt);
    }
    Ok(total - upsilon(dist, pt))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HcStatus {
    InsideHeuristic,
    OutsideCertified,
}

impl HcStatus {
    pub fn certification(&self) -> &'static str {
        match self {
            HcStatus::InsideHeuristic => "heuristic",
            HcStatus::OutsideCertified => "exact",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HcVerdict {
    pub status: HcStatus,
    /// Size of the certified violation (`-G` for channels, `ratio - 1` for
    /// norm pairs); zero when inside.
    pub violation: f64,
    /// Smallest objective value seen by the search.
    pub best_objective: f64,
    pub witness_channel: Option<Channel>,
    pub witness_norm_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub restarts: usize,
    pub input_pair: Option<(usize, usize)>,
}

impl HcVerdict {
    pub fn is_outside(&self) -> bool {
        self.status == HcStatus::OutsideCertified
    }

    fn inside(best_objective: f64, restarts: usize) -> Self {
        HcVerdict {
            status: HcStatus::InsideHeuristic,
            violation: 0.0,
            best_objective,
            witness_channel: None,
            witness_norm_pair: None,
            restarts,
            input_pair: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HcOptions {
    pub restarts: usize,
    /// Defaults to `|A| |B| + 2`.
    pub u_card: Option<usize>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for HcOptions {
    fn default() -> Self {
        HcOptions {
            restarts: DEFAULT_RESTARTS,
            u_card: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: HC_TOLERANCE,
            seed: 0,
        }
    }
}

/// Channel search restricted to the support cells of `dist`.
struct Search<'a> {
    pt: RibbonPoint,
    u: usize,
    cells: Vec<(usize, usize)>,
    p: Vec<f64>,
    pa: &'a [f64],
    pb: &'a [f64],
}

impl<'a> Search<'a> {
    fn new(dist: &'a JointDistribution, pt: RibbonPoint, u: usize) -> Self {
        let cells = dist.support();
        let p = cells.iter().map(|&(a, b)| dist.get(a, b)).collect();
        Search {
            pt,
            u,
            cells,
            p,
            pa: dist.marginal_a(),
            pb: dist.marginal_b(),
        }
    }

    /// Output marginals: `r(u)`, `p(a) r(u|a)`, `p(b) r(u|b)`.
    fn marginals(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let u = self.u;
        let mut r = vec![0.0; u];
        let mut ra = vec![0.0; self.pa.len() * u];
        let mut rb = vec![0.0; self.pb.len() * u];
        for (k, &(a, b)) in self.cells.iter().enumerate() {
            for j in 0..u {
                let m = self.p[k] * w[k * u + j];
                r[j] += m;
                ra[a * u + j] += m;
                rb[b * u + j] += m;
            }
        }
        (r, ra, rb)
    }

    fn objective(&self, w: &[f64]) -> f64 {
        let u = self.u;
        let (r, ra, rb) = self.marginals(w);
        let h_u = entropy_nats(&r);
        let h_u_given_ab: f64 = -self
            .p
            .iter()
            .enumerate()
            .map(|(k, &pk)| {
                pk * w[k * u..(k + 1) * u]
                    .iter()
                    .filter(|&&v| v > 0.0)
                    .map(|&v| v * v.ln())
                    .sum::<f64>()
            })
            .sum::<f64>();
        let cond_entropy = |joint: &[f64], marg: &[f64]| -> f64 {
            let mut h = 0.0;
            for (s, &m) in marg.iter().enumerate() {
                if m <= 0.0 {
                    continue;
                }
                for &v in &joint[s * u..(s + 1) * u] {
                    if v > 0.0 {
                        h -= v * (v / m).ln();
                    }
                }
            }
            h
        };
        let i_ab = h_u - h_u_given_ab;
        let i_a = h_u - cond_entropy(&ra, self.pa);
        let i_b = h_u - cond_entropy(&rb, self.pb);
        i_ab - self.pt.lambda1 * i_a - self.pt.lambda2 * i_b
    }

    fn normalize_rows(&self, logw: &mut [f64]) -> Vec<f64> {
        let u = self.u;
        let floor = PROB_FLOOR.ln();
        let mut w = vec![0.0; logw.len()];
        for (row, out) in logw.chunks_mut(u).zip(w.chunks_mut(u)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            for (l, o) in row.iter_mut().zip(out.iter_mut()) {
                *l = (*l - lse).max(floor);
                *o = l.exp();
            }
        }
        w
    }

    /// Exponentiated-gradient descent from `w0`; returns `(G, w)`.
    fn descend(&self, w0: &[f64], max_iter: usize) -> (f64, Vec<f64>) {
        let u = self.u;
        let mut logw: Vec<f64> = w0.iter().map(|&v| v.max(PROB_FLOOR).ln()).collect();
        let mut w = self.normalize_rows(&mut logw);
        let mut g = self.objective(&w);
        let mut eta = 1.0;
        let c0 = 1.0 - self.pt.lambda1 - self.pt.lambda2;
        for _ in 0..max_iter {
            let (r, ra, rb) = self.marginals(&w);
            let ln_or_floor = |v: f64| v.max(PROB_FLOOR).ln();
            let mut target = vec![0.0; logw.len()];
            for (k, &(a, b)) in self.cells.iter().enumerate() {
                for j in 0..u {
                    target[k * u + j] = self.pt.lambda1 * ln_or_floor(ra[a * u + j] / self.pa[a])
                        + self.pt.lambda2 * ln_or_floor(rb[b * u + j] / self.pb[b])
                        + c0 * ln_or_floor(r[j]);
                }
            }
            let mut accepted = false;
            while eta >= 1e-6 {
                let mut trial: Vec<f64> = logw
                    .iter()
                    .zip(&target)
                    .map(|(l, t)| (1.0 - eta) * l + eta * t)
                    .collect();
                let wt = self.normalize_rows(&mut trial);
                let gt = self.objective(&wt);
                if gt < g {
                    let gain = g - gt;
                    logw = trial;
                    w = wt;
                    g = gt;
                    accepted = gain > 1e-15;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (g, w)
    }

    /// Expands a support-restricted channel into a full one.
    fn to_channel(&self, a_card: usize, b_card: usize, w: &[f64]) -> Channel {
        let u = self.u;
        let mut full = vec![1.0 / u as f64; a_card * b_card * u];
        for (k, &(a, b)) in self.cells.iter().enumerate() {
            let row = &w[k * u..(k + 1) * u];
            let total: f64 = row.iter().sum();
            for j in 0..u {
                full[(a * b_card + b) * u + j] = row[j] / total;
            }
        }
        Channel {
            a_card,
            b_card,
            u_card: u,
            w: full,
        }
    }
}

fn deterministic_seeds(
    dist: &JointDistribution,
    search: &Search,
    pt: RibbonPoint,
) -> Vec<Vec<f64>> {
    let u = search.u;
    let n = search.cells.len();
    let mut seeds = Vec::new();
    let one_hot = |pick: &dyn Fn(usize) -> usize| -> Vec<f64> {
        let mut w = vec![0.0; n * u];
        for k in 0..n {
            w[k * u + pick(k)] = 1.0;
        }
        w
    };
    if n <= u {
        seeds.push(one_hot(&|k| k));
    }
    if dist.a_card() <= u {
        seeds.push(one_hot(&|k| search.cells[k].0));
    }
    if dist.b_card() <= u {
        seeds.push(one_hot(&|k| search.cells[k].1));
    }
    // Second-order direction: a binary U that tilts p along the worst
    // zero-mean function of the maximal-correlation form.
    if let Some(f) = mc_membership(dist, pt).witness_f {
        let max_abs = search
            .cells
            .iter()
            .map(|&(a, b)| f.get(a, b).abs())
            .fold(0.0, f64::max);
        if max_abs > 0.0 {
            for scale in [0.5, 0.05, 0.005] {
                let eps = scale / max_abs;
                let mut w = vec![0.0; n * u];
                for (k, &(a, b)) in search.cells.iter().enumerate() {
                    let v = eps * f.get(a, b);
                    w[k * u] = 0.5 * (1.0 + v);
                    w[k * u + 1] = 0.5 * (1.0 - v);
                }
                seeds.push(w);
            }
        }
    }
    seeds
}

fn random_channel(rng: &mut ChaCha8Rng, rows: usize, u: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..rows * u).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    for row in w.chunks_mut(u) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    w
}

fn certify_channel(
    dist: &JointDistribution,
    ch: Channel,
    pt: RibbonPoint,
    tolerance: f64,
    best_objective: f64,
    restarts: usize,
) -> HcVerdict {
    let terms = channel_objective(dist, &ch, pt).expect("channel matches distribution");
    if terms.objective < -tolerance {
        HcVerdict {
            status: HcStatus::OutsideCertified,
            violation: -terms.objective,
            best_objective,
            witness_channel: Some(ch),
            witness_norm_pair: None,
            restarts,
            input_pair: None,
        }
    } else {
        HcVerdict::inside(best_objective, restarts)
    }
}

/// Multistart channel search. Deterministic seeds (`U = AB`, `U = A`,
/// `U = B` and tilts along the worst maximal-correlation direction) run
/// first; if none certifies a violation, `opts.restarts` random channels are
/// descended in parallel.
pub fn hc_membership_channel(
    dist: &JointDistribution,
    pt: RibbonPoint,
    opts: &HcOptions,
) -> HcVerdict {
    let u = opts
        .u_card
        .unwrap_or(dist.a_card() * dist.b_card() + 2)
        .max(2);
    let search = Search::new(dist, pt, u);
    if search.cells.len() <= 1 {
        return HcVerdict::inside(0.0, 0);
    }
    let to_channel = |w: &[f64]| search.to_channel(dist.a_card(), dist.b_card(), w);

    let mut best: Option<(f64, Vec<f64>)> = None;
    for seed in deterministic_seeds(dist, &search, pt) {
        let (g, w) = search.descend(&seed, opts.max_iterations);
        if best.as_ref().is_none_or(|(bg, _)| g < *bg) {
            best = Some((g, w));
        }
    }
    if let Some((g, w)) = &best {
        if *g < -opts.tolerance {
            let v = certify_channel(dist, to_channel(w), pt, opts.tolerance, *g, 0);
            if v.is_outside() {
                return v;
            }
        }
    }

    let seeds = derive_seeds(opts.seed, opts.restarts);
    let results: Vec<(f64, Vec<f64>)> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let w0 = random_channel(&mut rng, search.cells.len(), u);
            search.descend(&w0, opts.max_iterations)
        })
        .collect();
    for (g, w) in results {
        if best.as_ref().is_none_or(|(bg, _)| g < *bg) {
            best = Some((g, w));
        }
    }
    let (g, w) = best.expect("at least one seed");
    if g < -opts.tolerance {
        certify_channel(dist, to_channel(&w), pt, opts.tolerance, g, opts.restarts)
    } else {
        HcVerdict::inside(g, opts.restarts)
    }
}

/// `E[f g] / (||f||_{1/lambda1} ||g||_{1/lambda2})` for non-negative `f`, `g`.
pub fn norm_ratio(dist: &JointDistribution, f: &[f64], g: &[f64], pt: RibbonPoint) -> f64 {
    let efg: f64 = dist
        .support()
        .iter()
        .map(|&(a, b)| dist.get(a, b) * f[a] * g[b])
        .sum();
    efg / (weighted_norm(dist.marginal_a(), f, pt.lambda1)
        * weighted_norm(dist.marginal_b(), g, pt.lambda2))
}

/// `(E |h|^(1/lambda))^lambda`.
fn weighted_norm(marginal: &[f64], h: &[f64], lambda: f64) -> f64 {
    let p = 1.0 / lambda;
    marginal
        .iter()
        .zip(h)
        .map(|(m, v)| m * v.abs().powf(p))
        .sum::<f64>()
        .powf(lambda)
}

/// Best response of one side: maximizes `E[h f] / ||f||_{1/lambda}` over
/// non-negative `f`, given `h >= 0` on that side.
fn best_response(marginal: &[f64], h: &[f64], lambda: f64) -> Vec<f64> {
    let support: Vec<usize> = (0..h.len()).filter(|&i| marginal[i] > 0.0).collect();
    let hmax = support.iter().map(|&i| h[i]).fold(0.0, f64::max);
    let mut f = vec![0.0; h.len()];
    if hmax <= 0.0 {
        support.iter().for_each(|&i| f[i] = 1.0);
        return f;
    }
    if lambda >= 1.0 {
        let best = support
            .iter()
            .copied()
            .find(|&i| h[i] == hmax)
            .expect("nonempty");
        for &i in &support {
            f[i] = NORM_FLOOR;
        }
        f[best] = 1.0;
        return f;
    }
    let e = lambda / (1.0 - lambda);
    for &i in &support {
        f[i] = (h[i] / hmax).powf(e).max(NORM_FLOOR);
    }
    f
}

fn conditional_mean(dist: &JointDistribution, g: &[f64], over_a: bool) -> Vec<f64> {
    let (card, marg) = if over_a {
        (dist.a_card(), dist.marginal_a())
    } else {
        (dist.b_card(), dist.marginal_b())
    };
    let mut out = vec![0.0; card];
    for (a, b) in dist.support() {
        if over_a {
            out[a] += dist.get(a, b) * g[b];
        } else {
            out[b] += dist.get(a, b) * g[a];
        }
    }
    out.iter_mut().zip(marg).for_each(|(v, &m)| {
        if m > 0.0 {
            *v /= m
        }
    });
    out
}

/// Alternating maximization of the norm ratio over non-negative pairs.
/// Requires both `lambda`s to be positive.
pub fn hc_membership_norms(
    dist: &JointDistribution,
    pt: RibbonPoint,
    opts: &HcOptions,
) -> Result<HcVerdict> {
    if pt.lambda1 <= 0.0 || pt.lambda2 <= 0.0 {
        return Err(Error::OutOfRange(
            "the norm form needs lambda1, lambda2 > 0".into(),
        ));
    }
    let (na, nb) = (dist.a_card(), dist.b_card());
    let pb = dist.marginal_b();

    let mut starts: Vec<Vec<f64>> = Vec::new();
    for b in (0..nb).filter(|&b| pb[b] > 0.0) {
        let mut g = vec![NORM_FLOOR; nb];
        g[b] = 1.0;
        starts.push(g);
    }
    if let Some(g) = rho(dist).optimizer_g {
        let vals = g.values_or_zero();
        let max_abs = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for sign in [1.0, -1.0] {
            starts.push(
                vals.iter()
                    .map(|v| (1.0 + sign * 0.9 * v / max_abs).max(NORM_FLOOR))
                    .collect(),
            );
        }
    }
    let seeds = derive_seeds(opts.seed, opts.restarts);
    for s in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        starts.push(
            (0..nb)
                .map(|_| rng.sample::<f64, _>(Exp1) + NORM_FLOOR)
                .collect(),
        );
    }

    let run = |g0: &Vec<f64>| -> (f64, Vec<f64>, Vec<f64>) {
        let mut g = g0.clone();
        let mut f = best_response(
            dist.marginal_a(),
            &conditional_mean(dist, &g, true),
            pt.lambda1,
        );
        let mut ratio = norm_ratio(dist, &f, &g, pt);
        for _ in 0..NORM_ITERATIONS {
            g = best_response(pb, &conditional_mean(dist, &f, false), pt.lambda2);
            f = best_response(
                dist.marginal_a(),
                &conditional_mean(dist, &g, true),
                pt.lambda1,
            );
            let next = norm_ratio(dist, &f, &g, pt);
            let done = next - ratio <= 1e-15;
            ratio = ratio.max(next);
            if done {
                break;
            }
        }
        (ratio, f, g)
    };
    let results: Vec<(f64, Vec<f64>, Vec<f64>)> = starts.par_iter().map(run).collect();
    let (ratio, f, g) = results
        .into_iter()
        .fold(
            None,
            |acc: Option<(f64, Vec<f64>, Vec<f64>)>, r| match acc {
                Some(a) if a.0 >= r.0 => Some(a),
                _ => Some(r),
            },
        )
        .expect("at least one start");
    debug_assert_eq!(f.len(), na);
    let checked = norm_ratio(dist, &f, &g, pt);
    if checked > 1.0 + opts.tolerance {
        Ok(HcVerdict {
            status: HcStatus::OutsideCertified,
            violation: checked - 1.0,
            best_objective: 1.0 - ratio,
            witness_channel: None,
            witness_norm_pair: Some((f, g)),
            restarts: opts.restarts,
            input_pair: None,
        })
    } else {
        Ok(HcVerdict::inside(1.0 - ratio, opts.restarts))
    }
}

/// Box ribbon membership with the channel method: outside as soon as one
/// input pair is refuted.
pub fn hc_membership_box(b: &NoSignalingBox, pt: RibbonPoint, opts: &HcOptions) -> HcVerdict {
    let mut best_objective = f64::INFINITY;
    for (x, y) in b.input_pairs() {
        let mut v = hc_membership_channel(&b.conditional_joint(x, y).expect("in range"), pt, opts);
        if v.is_outside() {
            v.input_pair = Some((x, y));
            return v;
        }
        best_objective = best_objective.min(v.best_objective);
    }
    HcVerdict::inside(best_objective, opts.restarts)
}

/// Estimate of `inf (1 - lambda1)/lambda2` over points the channel search
/// does not refute, on slices `lambda2 = k / grid`.
pub fn s_star(dist: &JointDistribution, grid: usize, opts: &HcOptions) -> f64 {
    let grid = grid.max(1);
    let mut best = f64::INFINITY;
    for k in 1..=grid {
        let lambda2 = k as f64 / grid as f64;
        let inside = |l1: f64| {
            !hc_membership_channel(
                dist,
                RibbonPoint {
                    lambda1: l1,
                    lambda2,
                },
                opts,
            )
            .is_outside()
        };
        let l1 = if inside(1.0) {
            1.0
        } else {
            let (mut lo, mut hi) = (1.0 - lambda2, 1.0);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        best = best.min((1.0 - l1) / lambda2);
    }
    best
}

/// Restriction of a violating channel for `p (x) q` to the two factors.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitWitness {
    /// `p(u | a1 b1) = sum_{a2 b2} q(a2 b2) w(u | a1 a2, b1 b2)`.
    pub first: Channel,
    pub first_objective: f64,
    /// `U' = (U, A1, B1)` seen from the second factor, symbol `(u * |A1| + a1) * |B1| + b1`.
    pub second: Channel,
    pub second_objective: f64,
}

/// Splits a channel on `p.tensor(q)` into channels on `p` and `q` whose
/// objectives sum to at most the original objective.
pub fn split_tensor_witness(
    p: &JointDistribution,
    q: &JointDistribution,
    ch: &Channel,
    pt: RibbonPoint,
) -> Result<SplitWitness> {
    let (a1, b1, a2, b2) = (p.a_card(), p.b_card(), q.a_card(), q.b_card());
    if ch.a_card != a1 * a2 || ch.b_card != b1 * b2 {
        return Err(Error::ShapeMismatch(
            "channel does not live on the tensor product".into(),
        ));
    }
    let u = ch.u_card;
    let w = |x1: usize, x2: usize, y1: usize, y2: usize, j: usize| {
        ch.get(x1 * a2 + x2, y1 * b2 + y2, j)
    };

    let mut first = vec![0.0; a1 * b1 * u];
    for x1 in 0..a1 {
        for y1 in 0..b1 {
            for x2 in 0..a2 {
                for y2 in 0..b2 {
                    let qq = q.get(x2, y2);
                    for j in 0..u {
                        first[(x1 * b1 + y1) * u + j] += qq * w(x1, x2, y1, y2, j);
                    }
                }
            }
        }
    }

    let u2 = u * a1 * b1;
    let mut second = vec![0.0; a2 * b2 * u2];
    for x2 in 0..a2 {
        for y2 in 0..b2 {
            for j in 0..u {
                for x1 in 0..a1 {
                    for y1 in 0..b1 {
                        second[(x2 * b2 + y2) * u2 + (j * a1 + x1) * b1 + y1] =
                            p.get(x1, y1) * w(x1, x2, y1, y2, j);
                    }
                }
            }
        }
    }
    let first = Channel::new(a1, b1, u, first)?;
    let second = Channel::new(a2, b2, u2, second)?;
    let first_objective = channel_objective(p, &first, pt)?.objective;
    let second_objective = channel_objective(q, &second, pt)?.objective;
    Ok(SplitWitness {
        first,
        first_objective,
        second,
        second_objective,
    })
}

/// Inclusion test for the doubly symmetric binary source with correlation
/// `rho`: inside iff `rho^2 <= (1 - lambda1)(1 - lambda2) / (lambda1 lambda2)`.
pub fn dsbs_inside(rho: f64, pt: RibbonPoint) -> bool {
    if pt.lambda1 == 0.0 || pt.lambda2 == 0.0 {
        return true;
    }
    rho * rho * pt.lambda1 * pt.lambda2 <= (1.0 - pt.lambda1) * (1.0 - pt.lambda2)
}

/// Channel-method membership of every point of the `k x k` grid in the
/// box ribbon.
pub fn scan_box(b: &NoSignalingBox, k: usize, opts: &HcOptions) -> Vec<ScanRow> {
    RibbonPoint::grid(k)
        .into_iter()
        .map(|pt| {
            let v = hc_membership_box(b, pt, opts);
            ScanRow {
                lambda1: pt.lambda1,
                lambda2: pt.lambda2,
                inside: !v.is_outside(),
                margin: v.best_objective,
                certified: Some(v.status.certification()),
            }
        })
        .collect()
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

    fn pt(l1: f64, l2: f64) -> RibbonPoint {
        RibbonPoint::new(l1, l2).unwrap()
    }

    fn quick() -> HcOptions {
        HcOptions {
            restarts: 8,
            ..HcOptions::default()
        }
    }

    #[test]
    fn upsilon_examples() {
        let prod = JointDistribution::product(&[0.3, 0.7], &[0.5, 0.5]).unwrap();
        assert!(upsilon(&prod, pt(1.0, 1.0)).abs() < 1e-15);
        assert!((upsilon(&prod, pt(0.0, 0.0)) + prod.entropy_joint()).abs() < 1e-15);
        assert!(upsilon(&q_eta(1.0), pt(0.5, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn triangle_is_never_refuted() {
        let p = q_eta(0.7);
        for q in [pt(0.5, 0.5), pt(0.2, 0.8), pt(1.0, 0.0), pt(0.0, 0.0)] {
            assert_eq!(
                hc_membership_channel(&p, q, &quick()).status,
                HcStatus::InsideHeuristic
            );
        }
    }

    #[test]
    fn non_product_is_refuted_at_one_one() {
        let p = JointDistribution::new(2, 2, vec![0.3, 0.2, 0.1, 0.4]).unwrap();
        let v = hc_membership_channel(&p, pt(1.0, 1.0), &quick());
        assert!(v.is_outside());
        let terms =
            channel_objective(&p, v.witness_channel.as_ref().unwrap(), pt(1.0, 1.0)).unwrap();
        assert!((terms.objective + v.violation).abs() < 1e-12);
        let n = hc_membership_norms(&p, pt(1.0, 1.0), &quick()).unwrap();
        assert!(n.is_outside());
    }

    #[test]
    fn perfect_correlation_follows_the_diagonal() {
        let p = q_eta(1.0);
        assert!(hc_membership_channel(&p, pt(0.6, 0.6), &quick()).is_outside());
        assert!(!hc_membership_norms(&p, pt(0.4995, 0.4995), &quick())
            .unwrap()
            .is_outside());
        assert!(hc_membership_norms(&p, pt(0.6, 0.6), &quick())
            .unwrap()
            .is_outside());
    }

    #[test]
    fn product_is_never_refuted_by_norms() {
        let p = JointDistribution::product(&[0.3, 0.7], &[0.2, 0.5, 0.3]).unwrap();
        for q in [pt(1.0, 1.0), pt(0.3, 0.9), pt(0.05, 0.05)] {
            assert!(!hc_membership_norms(&p, q, &quick()).unwrap().is_outside());
        }
        assert!(hc_membership_norms(&p, pt(0.0, 0.5), &quick()).is_err());
    }

    #[test]
    fn envelope_gap_equals_objective() {
        let p = JointDistribution::new(2, 2, vec![0.3, 0.2, 0.1, 0.4]).unwrap();
        let ch = Channel::new(
            2,
            2,
            3,
            vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3, 0.1, 0.1, 0.8, 0.25, 0.25, 0.5],
        )
        .unwrap();
        let q = pt(0.7, 0.4);
        let g = channel_objective(&p, &ch, q).unwrap().objective;
        assert!((envelope_gap(&p, &ch, q).unwrap() - g).abs() < 1e-12);
    }

    #[test]
    fn dsbs_boundary_agrees_with_search() {
        let p = q_eta(0.5);
        for q in [pt(0.9, 0.9), pt(0.7, 0.7), pt(0.95, 0.3), pt(0.6, 0.8)] {
            let v = hc_membership_channel(&p, q, &quick());
            assert_eq!(v.is_outside(), !dsbs_inside(0.5, q), "{q:?}");
        }
    }

    #[test]
    fn tensor_witness_splits() {
        let p = JointDistribution::new(2, 2, vec![0.3, 0.2, 0.1, 0.4]).unwrap();
        let q = q_eta(0.6);
        let pq = p.tensor(&q).unwrap();
        let at = pt(0.9, 0.9);
        let v = hc_membership_channel(&pq, at, &quick());
        assert!(v.is_outside());
        let s = split_tensor_witness(&p, &q, v.witness_channel.as_ref().unwrap(), at).unwrap();
        assert!(s.first_objective + s.second_objective <= -v.violation + 1e-12);
    }

    #[test]
    fn s_star_bounds() {
        let opts = HcOptions {
            restarts: 4,
            ..HcOptions::default()
        };
        let prod = JointDistribution::product(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(s_star(&prod, 4, &opts), 0.0);
        assert!(s_star(&q_eta(0.5), 4, &opts) >= 0.25 - 1e-3);
    }
}
