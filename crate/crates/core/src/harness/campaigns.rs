use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{random_binary_box, FuzzReport};
use crate::error::{Error, Result};
use crate::maxcorr::rho_box;
use crate::mc_ribbon::{mc_inf_ratio_box, mc_membership_box, RibbonPoint, PSD_TOLERANCE};
use crate::nsbox::{BinaryBoxParams, NoSignalingBox};
use crate::seeds::{case_rng, derive_seeds, random_simplex};
use crate::wiring::{
    derived_box, execute, random_instance, sequential_chain, verify_chain_rule_lemma,
    verify_structure_lemmas, OutputSelector, TrajectoryJoint, WiringInstance, MAX_BOXES,
};

/// Slack allowed in `rho(derived) <= max_i rho(box_i)`.
pub const RHO_TOLERANCE: f64 = 1e-9;

/// Grid points closer than this to the boundary of some input ribbon are
/// not checked.
pub const MC_BAND: f64 = 1e-6;

/// Slack allowed in the mutual-information inequality over random channels.
pub const HC_INEQUALITY_TOLERANCE: f64 = 1e-9;

/// Largest residual accepted for the wiring information identities.
pub const LEMMA_TOLERANCE: f64 = 1e-9;

/// Number of slices used by the inf-ratio column of the isotropic scan.
const SCAN_SLICES: usize = 10_000;

type Rows = Vec<(String, f64, f64)>;

fn check_box_count(n_boxes: usize) -> Result<()> {
    if n_boxes == 0 {
        return Err(Error::OutOfRange("campaigns need at least one box".into()));
    }
    if n_boxes > MAX_BOXES {
        return Err(Error::TooManyBoxes {
            n: n_boxes,
            cap: MAX_BOXES,
        });
    }
    Ok(())
}

/// Runs `case` on every derived seed in parallel and records the rows in
/// case order.
fn run_cases(
    mut report: FuzzReport,
    n_cases: usize,
    seed: u64,
    case: impl Fn(usize, &mut ChaCha8Rng) -> Result<Rows> + Sync,
) -> Result<FuzzReport> {
    let seeds = derive_seeds(seed, n_cases);
    let results: Vec<Rows> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| case(i, &mut case_rng(s)))
        .collect::<Result<_>>()?;
    for (i, rows) in results.into_iter().enumerate() {
        for (q, lhs, rhs) in rows {
            report.check(i, seeds[i], q, lhs, rhs);
        }
    }
    report.cases_run = n_cases;
    Ok(report)
}

fn random_wiring(rng: &mut ChaCha8Rng, n_boxes: usize) -> Result<WiringInstance> {
    let boxes: Vec<NoSignalingBox> = (0..n_boxes).map(|_| random_binary_box(rng)).collect();
    let deterministic = rng.random_bool(0.5);
    random_instance(boxes, 2, rng.next_u64(), deterministic)
}

fn max_rho(boxes: &[NoSignalingBox]) -> f64 {
    boxes.iter().map(|b| rho_box(b).rho).fold(0.0, f64::max)
}

/// Random binary boxes under random strategies (half of them
/// deterministic): checks `rho(derived) <= max_i rho(box_i)`.
pub fn fuzz_rho_monotonicity(n_boxes: usize, n_cases: usize, seed: u64) -> Result<FuzzReport> {
    check_box_count(n_boxes)?;
    let config = json!({"n_boxes": n_boxes, "n_cases": n_cases, "seed": seed});
    let report = FuzzReport::new("rho", config, RHO_TOLERANCE);
    run_cases(report, n_cases, seed, |_, rng| {
        let w = random_wiring(rng, n_boxes)?;
        let derived = derived_box(&w)?;
        Ok(vec![(
            "rho".into(),
            rho_box(&derived).rho,
            max_rho(w.boxes()),
        )])
    })
}

/// Random sequential chains of length `1..=max_len` with a random output
/// selector: checks `rho(derived) <= max_i rho(box_i)`.
pub fn check_sequential_chains(max_len: usize, n_cases: usize, seed: u64) -> Result<FuzzReport> {
    check_box_count(max_len)?;
    let config = json!({"max_len": max_len, "n_cases": n_cases, "seed": seed});
    let report = FuzzReport::new("chain", config, RHO_TOLERANCE);
    run_cases(report, n_cases, seed, |i, rng| {
        let len = 1 + i % max_len;
        let boxes: Vec<NoSignalingBox> = (0..len).map(|_| random_binary_box(rng)).collect();
        let selector = match rng.random_range(0..3) {
            0 => OutputSelector::Last,
            1 => OutputSelector::Box(rng.random_range(0..len)),
            _ => OutputSelector::Parity,
        };
        let bound = max_rho(&boxes);
        let derived = derived_box(&sequential_chain(boxes, selector)?)?;
        Ok(vec![(
            format!("rho_chain[len={len};{selector:?}]"),
            rho_box(&derived).rho,
            bound,
        )])
    })
}

/// For every grid point inside each box's ribbon with margin above
/// [`MC_BAND`], checks that the derived box's ribbon contains it too. Rows
/// read `0 <= min eigenvalue of the derived form`.
pub fn fuzz_mc_ribbon_monotonicity(
    n_boxes: usize,
    n_cases: usize,
    grid: &[RibbonPoint],
    seed: u64,
) -> Result<FuzzReport> {
    check_box_count(n_boxes)?;
    let pts: Vec<[f64; 2]> = grid.iter().map(|p| [p.lambda1, p.lambda2]).collect();
    let config =
        json!({"n_boxes": n_boxes, "n_cases": n_cases, "grid": pts, "seed": seed, "band": MC_BAND});
    let report = FuzzReport::new("mc", config, PSD_TOLERANCE);
    run_cases(report, n_cases, seed, |_, rng| {
        let w = random_wiring(rng, n_boxes)?;
        let derived = derived_box(&w)?;
        let mut rows = Vec::new();
        for &pt in grid {
            let inner = w
                .boxes()
                .iter()
                .map(|b| mc_membership_box(b, pt).min_eigenvalue)
                .fold(f64::INFINITY, f64::min);
            if inner <= MC_BAND {
                continue;
            }
            let outer = mc_membership_box(&derived, pt).min_eigenvalue;
            rows.push((
                format!("mc_ribbon[l1={};l2={}]", pt.lambda1, pt.lambda2),
                0.0,
                outer,
            ));
        }
        Ok(rows)
    })
}

/// Random binary wirings with `1..=max_n` boxes at one random pair of
/// external inputs each; every information identity is a row
/// `residual <= 0`.
pub fn fuzz_structure_lemmas(max_n: usize, n_cases: usize, seed: u64) -> Result<FuzzReport> {
    check_box_count(max_n)?;
    let config = json!({"max_n": max_n, "n_cases": n_cases, "seed": seed});
    let report = FuzzReport::new("lemmas", config, LEMMA_TOLERANCE);
    run_cases(report, n_cases, seed, |i, rng| {
        let n = 1 + i % max_n;
        let w = random_wiring(rng, n)?;
        let (x, y) = (rng.random_range(0..2), rng.random_range(0..2));
        let s = verify_structure_lemmas(&w, x, y)?;
        let c = verify_chain_rule_lemma(&w, x, y)?;
        Ok(vec![
            (
                "outputs_vs_transcripts".into(),
                s.outputs_vs_transcripts,
                0.0,
            ),
            ("local_output".into(), s.local_output, 0.0),
            (
                "output_vs_other_record".into(),
                s.output_vs_other_record,
                0.0,
            ),
            (
                "choice_vs_other_record".into(),
                s.choice_vs_other_record,
                0.0,
            ),
            ("record_chain_rule".into(), c.residual(), 0.0),
        ])
    })
}

/// A random channel from trajectory pairs to `U`, as one probability row
/// per entry of the joint.
fn random_channel(t: &TrajectoryJoint, rng: &mut ChaCha8Rng, kind: usize) -> (usize, Vec<f64>) {
    let k = rng.random_range(2..=4);
    let m = t.entries.len();
    let one_hot = |u: usize| {
        let mut row = vec![0.0; k];
        row[u] = 1.0;
        row
    };
    let rows: Vec<Vec<f64>> = match kind {
        0 => (0..m).map(|_| random_simplex(rng, k)).collect(),
        1 => (0..m).map(|_| one_hot(rng.random_range(0..k))).collect(),
        2 => {
            let gamma = Gamma::new(0.2, 1.0).expect("valid shape");
            (0..m)
                .map(|_| {
                    let mut v: Vec<f64> = (0..k).map(|_| rng.sample(gamma) + 1e-300).collect();
                    let s: f64 = v.iter().sum();
                    v.iter_mut().for_each(|x| *x /= s);
                    v
                })
                .collect()
        }
        3 => {
            let g: Vec<usize> = (0..t.alice_paths.len())
                .map(|_| rng.random_range(0..k))
                .collect();
            let h: Vec<usize> = (0..t.bob_paths.len())
                .map(|_| rng.random_range(0..k))
                .collect();
            let noise = rng.random_range(0.0..0.3);
            t.entries
                .iter()
                .map(|&(ia, ib, _)| {
                    let mut row = vec![noise / k as f64; k];
                    row[(g[ia as usize] + h[ib as usize]) % k] += 1.0 - noise;
                    row
                })
                .collect()
        }
        _ => {
            let g: Vec<usize> = (0..t.alice_paths.len())
                .map(|_| rng.random_range(0..k))
                .collect();
            t.entries
                .iter()
                .map(|&(ia, _, _)| one_hot(g[ia as usize]))
                .collect()
        }
    };
    (k, rows.concat())
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// `(I(U; A-record), I(U; B-record), I(U; both records))` in nats.
fn channel_informations(t: &TrajectoryJoint, k: usize, w: &[f64]) -> (f64, f64, f64) {
    let (na, nb) = (t.alice_paths.len(), t.bob_paths.len());
    let mut pa = vec![0.0; na];
    let mut pb = vec![0.0; nb];
    let mut pau = vec![0.0; na * k];
    let mut pbu = vec![0.0; nb * k];
    let mut pu = vec![0.0; k];
    let (mut h_ab, mut h_abu) = (0.0, 0.0);
    for (e, &(ia, ib, p)) in t.entries.iter().enumerate() {
        let (ia, ib) = (ia as usize, ib as usize);
        pa[ia] += p;
        pb[ib] += p;
        h_ab += h(p);
        for u in 0..k {
            let q = p * w[e * k + u];
            pau[ia * k + u] += q;
            pbu[ib * k + u] += q;
            pu[u] += q;
            h_abu += h(q);
        }
    }
    let sum = |v: &[f64]| v.iter().map(|&p| h(p)).sum::<f64>();
    let h_u = sum(&pu);
    (
        sum(&pa) + h_u - sum(&pau),
        sum(&pb) + h_u - sum(&pbu),
        h_ab + h_u - h_abu,
    )
}

fn hc_rows(
    instance: &WiringInstance,
    pt: RibbonPoint,
    n_channels: usize,
    seed: u64,
) -> Result<Vec<(usize, u64, Rows)>> {
    let mut joints = Vec::new();
    for x in 0..instance.alice().external_card() {
        for y in 0..instance.bob().external_card() {
            joints.push(execute(instance, x, y)?);
        }
    }
    let seeds = derive_seeds(seed, n_channels);
    Ok(seeds
        .par_iter()
        .enumerate()
        .map(|(c, &s)| {
            let mut rng = case_rng(s);
            let kind = c % 5;
            let rows = joints
                .iter()
                .map(|t| {
                    let (k, w) = random_channel(t, &mut rng, kind);
                    let (ia, ib, iab) = channel_informations(t, k, &w);
                    (
                        format!(
                            "hc_ineq[channel={c};kind={kind};x'={};y'={}]",
                            t.x_prime, t.y_prime
                        ),
                        pt.lambda1 * ia + pt.lambda2 * ib,
                        iab,
                    )
                })
                .collect();
            (c, s, rows)
        })
        .collect())
}

/// Draws `n_channels` random channels `U | (Alice's record, Bob's record)`
/// for each external input pair and checks
/// `l1 I(U; A-record) + l2 I(U; B-record) <= I(U; both records)`.
///
/// This can falsify but not prove: a passing run covers only the sampled
/// channels. The inequality is guaranteed when `pt` lies in the
/// hypercontractivity ribbon of every box.
pub fn check_hc_wiring_inequality(
    instance: &WiringInstance,
    pt: RibbonPoint,
    n_channels: usize,
    seed: u64,
) -> Result<FuzzReport> {
    let config = json!({"pt": [pt.lambda1, pt.lambda2], "n_channels": n_channels, "seed": seed});
    let mut report = FuzzReport::new("hc-ineq", config, HC_INEQUALITY_TOLERANCE);
    for (c, s, rows) in hc_rows(instance, pt, n_channels, seed)? {
        for (q, lhs, rhs) in rows {
            report.check(c, s, q, lhs, rhs);
        }
    }
    report.cases_run = n_channels;
    Ok(report)
}

/// [`check_hc_wiring_inequality`] on random binary wirings, each at a
/// random point of the triangle `l1 + l2 <= 1`.
pub fn fuzz_hc_wiring_inequality(
    n_boxes: usize,
    n_cases: usize,
    n_channels: usize,
    seed: u64,
) -> Result<FuzzReport> {
    check_box_count(n_boxes)?;
    let config =
        json!({"n_boxes": n_boxes, "n_cases": n_cases, "n_channels": n_channels, "seed": seed});
    let report = FuzzReport::new("hc-ineq", config, HC_INEQUALITY_TOLERANCE);
    run_cases(report, n_cases, seed, |_, rng| {
        let w = random_wiring(rng, n_boxes)?;
        let l1: f64 = rng.random();
        let l2 = rng.random::<f64>() * (1.0 - l1);
        let pt = RibbonPoint::new(l1, l2)?;
        let rows = hc_rows(&w, pt, n_channels, rng.next_u64())?;
        Ok(rows.into_iter().flat_map(|(_, _, r)| r).collect())
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicRow {
    pub eta: f64,
    pub rho: f64,
    pub chsh: f64,
    pub mc_inf_ratio: f64,
}

impl IsotropicRow {
    pub const CSV_HEADER: &'static str = "eta,rho,chsh,mc_inf_ratio";

    pub fn to_csv(&self) -> String {
        use crate::report::format_sig as f;
        format!(
            "{},{},{},{}",
            f(self.eta),
            f(self.rho),
            f(self.chsh),
            f(self.mc_inf_ratio)
        )
    }
}

/// `rho`, CHSH value and ribbon inf-ratio of the isotropic box at each `eta`.
pub fn isotropic_scan(eta_grid: &[f64]) -> Result<Vec<IsotropicRow>> {
    eta_grid
        .par_iter()
        .map(|&eta| {
            let b = NoSignalingBox::isotropic(eta)?;
            Ok(IsotropicRow {
                eta,
                rho: rho_box(&b).rho,
                chsh: b.chsh_value()?,
                mc_inf_ratio: mc_inf_ratio_box(&b, SCAN_SLICES).estimate,
            })
        })
        .collect()
}

/// A binary box with `CHSH >= (1 + eta)/2`. Marginal biases are drawn
/// uniformly at a random scale; the four signed correlators are then drawn
/// uniformly from the corner of their box cut out by the CHSH constraint,
/// and rejected if they fall below their lower limits.
pub fn random_frontier_params<R: Rng + ?Sized>(rng: &mut R, eta: f64) -> BinaryBoxParams {
    loop {
        let scale: f64 = rng.random();
        let alpha = [
            scale * rng.random_range(-1.0..=1.0),
            scale * rng.random_range(-1.0..=1.0),
        ];
        let beta = [
            scale * rng.random_range(-1.0..=1.0),
            scale * rng.random_range(-1.0..=1.0),
        ];
        // t_xy = (-1)^(xy) zeta_xy, with CHSH = 1/2 + sum t / 8.
        let mut lo = [0.0; 4];
        let mut hi = [0.0; 4];
        for x in 0..2 {
            for y in 0..2 {
                let (d, s) = ((alpha[x] - beta[y]).abs(), (alpha[x] + beta[y]).abs());
                let k = 2 * x + y;
                if x & y == 1 {
                    (lo[k], hi[k]) = (d - 1.0, 1.0 - s);
                } else {
                    (lo[k], hi[k]) = (s - 1.0, 1.0 - d);
                }
            }
        }
        let budget = hi.iter().sum::<f64>() - 4.0 * eta;
        if budget < 0.0 {
            continue;
        }
        let w = random_simplex(rng, 5);
        let t: Vec<f64> = (0..4).map(|k| hi[k] - budget * w[k]).collect();
        if (0..4).any(|k| t[k] < lo[k]) {
            continue;
        }
        let zeta = [[t[0], t[1]], [t[2], -t[3]]];
        return BinaryBoxParams { alpha, beta, zeta };
    }
}

/// Samples binary boxes with `CHSH >= (1 + eta)/2` and checks
/// `rho_box >= eta`. Case 0 is the isotropic box itself.
pub fn chsh_rho_frontier(eta: f64, n_samples: usize, seed: u64) -> Result<FuzzReport> {
    if !(std::f64::consts::FRAC_1_SQRT_2 - 1e-12..=1.0).contains(&eta) {
        return Err(Error::OutOfRange(format!(
            "the frontier needs 1/sqrt(2) <= eta <= 1, got {eta}"
        )));
    }
    let config = json!({"eta": eta, "n_samples": n_samples, "seed": seed});
    let report = FuzzReport::new("frontier", config, RHO_TOLERANCE);
    run_cases(report, n_samples, seed, |i, rng| {
        let params = if i == 0 {
            BinaryBoxParams::isotropic(eta)
        } else {
            random_frontier_params(rng, eta)
        };
        let b = NoSignalingBox::from_binary_params(&params)?;
        let chsh = b.chsh_value()?;
        Ok(vec![
            ("chsh_threshold".into(), (1.0 + eta) / 2.0, chsh),
            ("rho_frontier".into(), eta, rho_box(&b).rho),
        ])
    })
}

/// Outcome of the common-randomness argument on a finite mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonRandomnessVerdict {
    pub threshold: f64,
    pub mixture_chsh: f64,
    pub hypothesis_met: bool,
    /// The positive-weight component with the largest CHSH value, when the
    /// hypothesis is met.
    pub component: Option<usize>,
    pub component_chsh: Option<f64>,
    pub component_rho: Option<f64>,
    /// `Some(rho >= eta2)` when `eta2 >= 1/sqrt(2)`.
    pub frontier_holds: Option<bool>,
}

impl CommonRandomnessVerdict {
    /// True when the argument goes through: either the hypothesis fails, or
    /// a component reaches the threshold and (where applicable) its `rho`
    /// reaches `eta2`.
    pub fn consistent(&self) -> bool {
        if !self.hypothesis_met {
            return true;
        }
        matches!(self.component_chsh, Some(c) if c >= self.threshold - 1e-12)
            && self.frontier_holds != Some(false)
    }

    pub fn summary(&self) -> &'static str {
        match (self.hypothesis_met, self.consistent()) {
            (false, _) => "hypothesis not met",
            (true, true) => "component found",
            (true, false) => "argument fails",
        }
    }
}

/// If `CHSH(sum_r w_r q_r) >= (1 + eta2)/2`, some component with positive
/// weight reaches the same CHSH value (CHSH is linear), and for
/// `eta2 >= 1/sqrt(2)` that component has `rho >= eta2`.
pub fn common_randomness_argument(
    eta2: f64,
    mixture: &[(f64, NoSignalingBox)],
) -> Result<CommonRandomnessVerdict> {
    if !(0.0..=1.0).contains(&eta2) {
        return Err(Error::OutOfRange(format!(
            "eta2 = {eta2} is outside [0, 1]"
        )));
    }
    let (weights, boxes): (Vec<f64>, Vec<NoSignalingBox>) = mixture.iter().cloned().unzip();
    if let Some(b) = boxes.iter().find(|b| !b.is_binary()) {
        return Err(Error::NotBinary(b.shape_string()));
    }
    let mixed = NoSignalingBox::mix(&boxes, &weights)?;
    let threshold = (1.0 + eta2) / 2.0;
    let mixture_chsh = mixed.chsh_value()?;
    let hypothesis_met = mixture_chsh >= threshold - 1e-12;
    let mut verdict = CommonRandomnessVerdict {
        threshold,
        mixture_chsh,
        hypothesis_met,
        component: None,
        component_chsh: None,
        component_rho: None,
        frontier_holds: None,
    };
    if !hypothesis_met {
        return Ok(verdict);
    }
    let mut best: Option<(usize, f64)> = None;
    for (r, (w, b)) in mixture.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        let c = b.chsh_value()?;
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((r, c));
        }
    }
    if let Some((r, c)) = best {
        let rho = rho_box(&boxes[r]).rho;
        verdict.component = Some(r);
        verdict.component_chsh = Some(c);
        verdict.component_rho = Some(rho);
        if eta2 >= std::f64::consts::FRAC_1_SQRT_2 - 1e-12 {
            verdict.frontier_holds = Some(rho >= eta2 - RHO_TOLERANCE);
        }
    }
    Ok(verdict)
}
