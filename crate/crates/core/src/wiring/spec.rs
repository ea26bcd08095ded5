//! JSON description of a wiring.
//!
//! ```json
//! {
//!   "boxes": [{"path": "pr.json"}, {"x_card": 2, "y_card": 2, "a_card": 2, "b_card": 2, "p": [...]}],
//!   "x_prime_card": 2,
//!   "y_prime_card": 2,
//!   "alice": {
//!     "output_card": 2,
//!     "steps": [{"map": {"0": [0, 0], "1": [0, 1]}}, {"rows": {"0|0,0,1": [[1, 0, 0.5], [1, 1, 0.5]]}}],
//!     "output": {"map": {"0|0,0,1|1,0,0": 1}}
//!   },
//!   "bob": {"steps": [], "output": {"rows": {}}}
//! }
//! ```
//!
//! Histories not listed use the uniform row.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{History, Party, PartyStrategy, StepRow, WiringInstance};
use crate::error::{Error, Result};
use crate::nsbox::{BoxFile, NoSignalingBox};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxRef {
    Path { path: PathBuf },
    Inline(BoxFile),
}

/// A step rule: full stochastic rows or a deterministic map to `[box, input]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum StepRuleSpec {
    Rows(BTreeMap<String, Vec<(usize, usize, f64)>>),
    Map(BTreeMap<String, (usize, usize)>),
}

/// The final output rule: probability rows or a deterministic map to `a'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum OutputRuleSpec {
    Rows(BTreeMap<String, Vec<f64>>),
    Map(BTreeMap<String, usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartySpec {
    /// Defaults to the last box's output alphabet on this side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_card: Option<usize>,
    #[serde(default)]
    pub steps: Vec<StepRuleSpec>,
    pub output: OutputRuleSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WiringSpec {
    pub boxes: Vec<BoxRef>,
    pub x_prime_card: usize,
    pub y_prime_card: usize,
    pub alice: PartySpec,
    pub bob: PartySpec,
}

impl PartySpec {
    fn build(
        &self,
        boxes: &[NoSignalingBox],
        party: Party,
        external_card: usize,
    ) -> Result<PartyStrategy> {
        let n = boxes.len();
        let last = &boxes[n - 1];
        let default_out = match party {
            Party::Alice => last.a_card(),
            Party::Bob => last.b_card(),
        };
        let out_card = self.output_card.unwrap_or(default_out);
        let mut s = PartyStrategy::for_boxes(boxes, party, external_card, out_card)?;
        if self.steps.len() > n {
            return Err(Error::InvalidStrategy(format!(
                "{party:?} lists {} step rules for {n} boxes",
                self.steps.len()
            )));
        }
        for (j, rule) in self.steps.iter().enumerate() {
            let rows: Vec<(String, StepRow)> = match rule {
                StepRuleSpec::Rows(r) => r.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                StepRuleSpec::Map(m) => m
                    .iter()
                    .map(|(k, &(b, x))| (k.clone(), vec![(b, x, 1.0)]))
                    .collect(),
            };
            for (key, row) in rows {
                let h = History::parse(&key)?;
                if h.moves.len() != j {
                    return Err(Error::InvalidStrategy(format!(
                        "history `{key}` listed under step {}",
                        j + 1
                    )));
                }
                s.set_step_row(h, row)?;
            }
        }
        let outputs: Vec<(String, Vec<f64>)> = match &self.output {
            OutputRuleSpec::Rows(r) => r.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            OutputRuleSpec::Map(m) => m
                .iter()
                .map(|(k, &v)| {
                    if v >= out_card {
                        return Err(Error::InvalidStrategy(format!(
                            "output {v} for `{k}` exceeds the alphabet {out_card}"
                        )));
                    }
                    let mut row = vec![0.0; out_card];
                    row[v] = 1.0;
                    Ok((k.clone(), row))
                })
                .collect::<Result<_>>()?,
        };
        for (key, row) in outputs {
            s.set_output_row(History::parse(&key)?, row)?;
        }
        Ok(s)
    }

    fn from_strategy(s: &PartyStrategy) -> Self {
        let steps = (0..s.n())
            .map(|j| {
                StepRuleSpec::Rows(
                    s.step_rows(j)
                        .into_iter()
                        .map(|(h, r)| (h.key(), r.clone()))
                        .collect(),
                )
            })
            .collect();
        let output = OutputRuleSpec::Rows(
            s.output_rows()
                .into_iter()
                .map(|(h, r)| (h.key(), r.clone()))
                .collect(),
        );
        PartySpec {
            output_card: Some(s.output_card()),
            steps,
            output,
        }
    }
}

impl WiringSpec {
    /// Resolves box references (relative paths against `base`) and builds
    /// the instance.
    pub fn to_instance(&self, base: Option<&Path>, tolerance: f64) -> Result<WiringInstance> {
        if self.boxes.is_empty() {
            return Err(Error::InvalidWiring(
                "a wiring needs at least one box".into(),
            ));
        }
        let boxes = self
            .boxes
            .iter()
            .map(|b| match b {
                BoxRef::Inline(f) => f.clone().into_box(tolerance),
                BoxRef::Path { path } => {
                    let full = match base {
                        Some(dir) if path.is_relative() => dir.join(path),
                        _ => path.clone(),
                    };
                    NoSignalingBox::load(full, tolerance)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if boxes.len() > super::MAX_BOXES {
            return Err(Error::TooManyBoxes {
                n: boxes.len(),
                cap: super::MAX_BOXES,
            });
        }
        let alice = self.alice.build(&boxes, Party::Alice, self.x_prime_card)?;
        let bob = self.bob.build(&boxes, Party::Bob, self.y_prime_card)?;
        WiringInstance::new(boxes, alice, bob)
    }

    /// Full-row description of an instance with the boxes inlined.
    pub fn from_instance(instance: &WiringInstance) -> Self {
        WiringSpec {
            boxes: instance
                .boxes()
                .iter()
                .map(|b| BoxRef::Inline(b.to_file()))
                .collect(),
            x_prime_card: instance.alice().external_card(),
            y_prime_card: instance.bob().external_card(),
            alice: PartySpec::from_strategy(instance.alice()),
            bob: PartySpec::from_strategy(instance.bob()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("wiring specs always serialize")
    }

    /// Reads a spec file and builds the instance; box paths are relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>, tolerance: f64) -> Result<WiringInstance> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)?.to_instance(path.parent(), tolerance)
    }
}
