//! Information identities satisfied by every wiring, evaluated exactly on
//! the trajectory joint.
//!
//! Transcripts are never stored as table variables. Each path is reduced to
//! small integer features (its box inputs and outputs, the step at which
//! each box is used, interned ids of its prefixes) and entropies are
//! computed by grouping the sparse joint on tuples of those features.

use std::hash::Hash;

use rustc_hash::FxHashMap;

use super::{execute, Path, TrajectoryJoint, WiringInstance};
use crate::error::Result;

/// Per-path features for one party. Indices `i` are boxes, `j` are steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PathFeatures {
    /// Output of box `i`.
    pub output: Vec<u32>,
    /// Input of box `i`.
    pub input: Vec<u32>,
    /// Step at which box `i` is used.
    pub position: Vec<u32>,
    /// Interned id of the record before box `i` is used (`T_i`).
    pub before_box: Vec<u32>,
    /// Interned id of the record before step `j`.
    pub before_step: Vec<u32>,
    /// `(box, input)` chosen at step `j`, encoded as `box * 1024 + input`.
    pub choice: Vec<u32>,
}

fn features(paths: &[Path], n: usize) -> Vec<PathFeatures> {
    let mut ids: FxHashMap<&[super::Move], u32> = FxHashMap::default();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let mut prefix_ids = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let next = ids.len() as u32;
            prefix_ids.push(*ids.entry(&p.moves[..k]).or_insert(next));
        }
        let position: Vec<u32> = p.position.iter().map(|&s| s as u32).collect();
        out.push(PathFeatures {
            output: p.io.iter().map(|&(_, o)| o as u32).collect(),
            input: p.io.iter().map(|&(x, _)| x as u32).collect(),
            before_box: p.position.iter().map(|&s| prefix_ids[s]).collect(),
            position,
            before_step: prefix_ids[..n].to_vec(),
            choice: p
                .moves
                .iter()
                .map(|m| (m.box_index * 1024 + m.input) as u32)
                .collect(),
        });
    }
    out
}

struct Joint<'a> {
    entries: &'a [(u32, u32, f64)],
    fa: Vec<PathFeatures>,
    fb: Vec<PathFeatures>,
}

impl Joint<'_> {
    fn entropy<K: Hash + Eq>(
        &self,
        key: impl Fn(&PathFeatures, &PathFeatures, u32, u32) -> K,
    ) -> f64 {
        let mut groups: FxHashMap<K, f64> = FxHashMap::default();
        for &(ia, ib, p) in self.entries {
            *groups
                .entry(key(&self.fa[ia as usize], &self.fb[ib as usize], ia, ib))
                .or_insert(0.0) += p;
        }
        groups
            .values()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// `I(X; Y | Z) = H(XZ) + H(YZ) - H(XYZ) - H(Z)`.
    fn cmi<X, Y, Z>(
        &self,
        x: impl Fn(&PathFeatures, &PathFeatures, u32, u32) -> X + Copy,
        y: impl Fn(&PathFeatures, &PathFeatures, u32, u32) -> Y + Copy,
        z: impl Fn(&PathFeatures, &PathFeatures, u32, u32) -> Z + Copy,
    ) -> f64
    where
        X: Hash + Eq,
        Y: Hash + Eq,
        Z: Hash + Eq,
    {
        self.entropy(|a, b, i, j| (x(a, b, i, j), z(a, b, i, j)))
            + self.entropy(|a, b, i, j| (y(a, b, i, j), z(a, b, i, j)))
            - self.entropy(|a, b, i, j| (x(a, b, i, j), y(a, b, i, j), z(a, b, i, j)))
            - self.entropy(z)
    }
}

/// Largest absolute value of each of the four families of conditional
/// mutual informations, over all boxes and steps and both parties.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StructureReport {
    /// Box outputs are independent of the transcripts given the box inputs.
    pub outputs_vs_transcripts: f64,
    /// One party's output of a box is independent of the other's record
    /// at that box, given its own.
    pub local_output: f64,
    /// An output is independent of the other party's full record given
    /// both parties' data at that box.
    pub output_vs_other_record: f64,
    /// Each choice of box and input is independent of the other party's
    /// full record given the chooser's past.
    pub choice_vs_other_record: f64,
}

impl StructureReport {
    pub fn max(&self) -> f64 {
        self.outputs_vs_transcripts
            .max(self.local_output)
            .max(self.output_vs_other_record)
            .max(self.choice_vs_other_record)
    }

    fn merge(&mut self, other: &StructureReport) {
        self.outputs_vs_transcripts = self
            .outputs_vs_transcripts
            .max(other.outputs_vs_transcripts);
        self.local_output = self.local_output.max(other.local_output);
        self.output_vs_other_record = self
            .output_vs_other_record
            .max(other.output_vs_other_record);
        self.choice_vs_other_record = self
            .choice_vs_other_record
            .max(other.choice_vs_other_record);
    }
}

fn structure_of(t: &TrajectoryJoint) -> StructureReport {
    let n = t.n;
    let j = Joint {
        entries: &t.entries,
        fa: features(&t.alice_paths, n),
        fb: features(&t.bob_paths, n),
    };
    let mut r = StructureReport::default();
    for i in 0..n {
        let v1 = j.cmi(
            |a, b, _, _| (a.output[i], b.output[i]),
            |a, b, _, _| {
                (
                    a.before_box[i],
                    b.before_box[i],
                    a.position[i],
                    b.position[i],
                )
            },
            |a, b, _, _| (a.input[i], b.input[i]),
        );
        r.outputs_vs_transcripts = r.outputs_vs_transcripts.max(v1.abs());

        let v2a = j.cmi(
            |a, _, _, _| a.output[i],
            |_, b, _, _| (b.before_box[i], b.input[i], b.position[i]),
            |a, _, _, _| (a.before_box[i], a.input[i], a.position[i]),
        );
        let v2b = j.cmi(
            |_, b, _, _| b.output[i],
            |a, _, _, _| (a.before_box[i], a.input[i], a.position[i]),
            |_, b, _, _| (b.before_box[i], b.input[i], b.position[i]),
        );
        r.local_output = r.local_output.max(v2a.abs()).max(v2b.abs());

        let v3a = j.cmi(
            |a, _, _, _| a.output[i],
            |_, _, _, ib| ib,
            |a, b, _, _| {
                (
                    a.before_box[i],
                    a.input[i],
                    a.position[i],
                    b.output[i],
                    b.input[i],
                    b.position[i],
                )
            },
        );
        let v3b = j.cmi(
            |_, b, _, _| b.output[i],
            |_, _, ia, _| ia,
            |a, b, _, _| {
                (
                    a.before_box[i],
                    a.output[i],
                    a.input[i],
                    a.position[i],
                    b.before_box[i],
                    b.input[i],
                    b.position[i],
                )
            },
        );
        r.output_vs_other_record = r.output_vs_other_record.max(v3a.abs()).max(v3b.abs());
    }
    for s in 0..n {
        let v4a = j.cmi(
            |a, _, _, _| a.choice[s],
            |_, _, _, ib| ib,
            |a, _, _, _| a.before_step[s],
        );
        let v4b = j.cmi(
            |_, b, _, _| b.choice[s],
            |_, _, ia, _| ia,
            |_, b, _, _| b.before_step[s],
        );
        r.choice_vs_other_record = r.choice_vs_other_record.max(v4a.abs()).max(v4b.abs());
    }
    r
}

/// Evaluates the four families of independence identities for external
/// inputs `(x', y')`. Every residual is zero in exact arithmetic.
pub fn verify_structure_lemmas(
    instance: &WiringInstance,
    x_prime: usize,
    y_prime: usize,
) -> Result<StructureReport> {
    let t = execute(instance, x_prime, y_prime)?;
    Ok(structure_of(&t))
}

/// Same as [`verify_structure_lemmas`], maximized over every external input pair.
pub fn verify_structure_lemmas_all(instance: &WiringInstance) -> Result<StructureReport> {
    let mut r = StructureReport::default();
    for x in 0..instance.alice().external_card() {
        for y in 0..instance.bob().external_card() {
            r.merge(&verify_structure_lemmas(instance, x, y)?);
        }
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainRuleReport {
    /// `H(A_[n] X_[n] Pi_[n])` for Alice's record.
    pub alice_entropy: f64,
    /// The step-by-step sum for Alice.
    pub alice_sum: f64,
    pub bob_entropy: f64,
    pub bob_sum: f64,
}

impl ChainRuleReport {
    pub fn residual(&self) -> f64 {
        (self.alice_entropy - self.alice_sum)
            .abs()
            .max((self.bob_entropy - self.bob_sum).abs())
    }
}

/// Checks that a party's record entropy splits as
/// `sum_j H(choice_j | record before step j) + sum_i H(A_i | T_i, X_i, Pi_i)`.
pub fn verify_chain_rule_lemma(
    instance: &WiringInstance,
    x_prime: usize,
    y_prime: usize,
) -> Result<ChainRuleReport> {
    let t = execute(instance, x_prime, y_prime)?;
    let n = t.n;
    let j = Joint {
        entries: &t.entries,
        fa: features(&t.alice_paths, n),
        fb: features(&t.bob_paths, n),
    };
    let alice_entropy = j.entropy(|_, _, ia, _| ia);
    let bob_entropy = j.entropy(|_, _, _, ib| ib);
    let mut alice_sum = 0.0;
    let mut bob_sum = 0.0;
    for s in 0..n {
        alice_sum += j.entropy(|a, _, _, _| (a.before_step[s], a.choice[s]))
            - j.entropy(|a, _, _, _| a.before_step[s]);
        bob_sum += j.entropy(|_, b, _, _| (b.before_step[s], b.choice[s]))
            - j.entropy(|_, b, _, _| b.before_step[s]);
    }
    for i in 0..n {
        alice_sum += j
            .entropy(|a, _, _, _| (a.before_box[i], a.input[i], a.position[i], a.output[i]))
            - j.entropy(|a, _, _, _| (a.before_box[i], a.input[i], a.position[i]));
        bob_sum += j
            .entropy(|_, b, _, _| (b.before_box[i], b.input[i], b.position[i], b.output[i]))
            - j.entropy(|_, b, _, _| (b.before_box[i], b.input[i], b.position[i]));
    }
    Ok(ChainRuleReport {
        alice_entropy,
        alice_sum,
        bob_entropy,
        bob_sum,
    })
}
