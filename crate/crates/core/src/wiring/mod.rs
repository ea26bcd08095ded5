//! Exact simulation of adaptive wirings of `n` no-signaling boxes.
//!
//! Each party, holding an external input, repeatedly picks an unused box
//! and an input for it (possibly at random, depending on everything seen
//! so far), reads the output, and after all `n` boxes post-processes its
//! record into a final output. Because every choice depends only on that
//! party's own record, a trajectory factors as
//! `w_A(path_A) w_B(path_B) prod_i p_i(a_i b_i | x_i y_i)`, where the path
//! weights collect the strategy probabilities. The engine enumerates each
//! party's paths once and pairs them.

mod lemmas;
mod spec;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::nsbox::{NoSignalingBox, NS_TOLERANCE};
use crate::prob::{table_size, TableDistribution, MAX_TABLE_ENTRIES};
use crate::seeds::random_simplex;

pub use lemmas::{
    verify_chain_rule_lemma, verify_structure_lemmas, verify_structure_lemmas_all, ChainRuleReport,
    PathFeatures, StructureReport,
};
pub use spec::{BoxRef, OutputRuleSpec, PartySpec, StepRuleSpec, WiringSpec};

/// Largest number of boxes the enumeration accepts.
pub const MAX_BOXES: usize = 4;

/// Rows whose mass differs from 1 by less than this are renormalized.
pub const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Alice,
    Bob,
}

/// One use of a box: which box, the input fed to it and the output read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Move {
    pub box_index: usize,
    pub input: usize,
    pub output: usize,
}

/// What a party knows before its next action.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History {
    pub external: usize,
    pub moves: Vec<Move>,
}

impl History {
    pub fn new(external: usize) -> Self {
        History {
            external,
            moves: Vec::new(),
        }
    }

    /// Canonical row key: `x'|box,input,output|...`.
    pub fn key(&self) -> String {
        let mut s = self.external.to_string();
        for m in &self.moves {
            s.push_str(&format!("|{},{},{}", m.box_index, m.input, m.output));
        }
        s
    }

    pub fn parse(key: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("malformed history key `{key}`"));
        let mut parts = key.split('|');
        let external = parts
            .next()
            .ok_or_else(bad)?
            .trim()
            .parse()
            .map_err(|_| bad())?;
        let mut moves = Vec::new();
        for part in parts {
            let nums: Vec<usize> = part
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            let [box_index, input, output] = nums[..] else {
                return Err(bad());
            };
            moves.push(Move {
                box_index,
                input,
                output,
            });
        }
        Ok(History { external, moves })
    }

    fn used(&self, n: usize) -> Vec<bool> {
        let mut used = vec![false; n];
        for m in &self.moves {
            used[m.box_index] = true;
        }
        used
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// A row of a step rule: probabilities of `(box, input)` choices.
pub type StepRow = Vec<(usize, usize, f64)>;

/// One party's local strategy. Rows are stored for the histories a builder
/// visited; any other history uses the uniform row (uniform over unused
/// boxes and their inputs for steps, uniform over outputs at the end).
#[derive(Clone, Debug, PartialEq)]
pub struct PartyStrategy {
    n: usize,
    external_card: usize,
    output_card: usize,
    /// Per box, this party's input and output alphabet sizes.
    input_cards: Vec<usize>,
    box_output_cards: Vec<usize>,
    steps: Vec<FxHashMap<History, StepRow>>,
    output: FxHashMap<History, Vec<f64>>,
}

/// A party's side of the boxes: `(input_cards, output_cards)`.
fn side_cards(boxes: &[NoSignalingBox], party: Party) -> (Vec<usize>, Vec<usize>) {
    match party {
        Party::Alice => (
            boxes.iter().map(|b| b.x_card()).collect(),
            boxes.iter().map(|b| b.a_card()).collect(),
        ),
        Party::Bob => (
            boxes.iter().map(|b| b.y_card()).collect(),
            boxes.iter().map(|b| b.b_card()).collect(),
        ),
    }
}

fn normalize_row(values: &mut [f64], what: &dyn Fn() -> String) -> Result<()> {
    if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidStrategy(format!(
            "{} has a negative or non-finite entry",
            what()
        )));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::InvalidStrategy(format!(
            "{} sums to {total}",
            what()
        )));
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

impl PartyStrategy {
    /// An empty table: every history uses the uniform row.
    pub fn uniform(
        input_cards: Vec<usize>,
        box_output_cards: Vec<usize>,
        external_card: usize,
        output_card: usize,
    ) -> Result<Self> {
        let n = input_cards.len();
        if n == 0 || n != box_output_cards.len() {
            return Err(Error::InvalidStrategy(
                "strategy needs one input and output card per box".into(),
            ));
        }
        if n > MAX_BOXES {
            return Err(Error::TooManyBoxes { n, cap: MAX_BOXES });
        }
        if external_card == 0
            || output_card == 0
            || input_cards.contains(&0)
            || box_output_cards.contains(&0)
        {
            return Err(Error::InvalidStrategy(
                "all alphabets must be non-empty".into(),
            ));
        }
        Ok(PartyStrategy {
            n,
            external_card,
            output_card,
            input_cards,
            box_output_cards,
            steps: vec![FxHashMap::default(); n],
            output: FxHashMap::default(),
        })
    }

    pub fn for_boxes(
        boxes: &[NoSignalingBox],
        party: Party,
        external_card: usize,
        output_card: usize,
    ) -> Result<Self> {
        let (inputs, outputs) = side_cards(boxes, party);
        Self::uniform(inputs, outputs, external_card, output_card)
    }

    /// Builds a strategy by running `step` and `output` on every history
    /// reachable from each external input; only those rows are stored.
    pub fn from_policy(
        mut self,
        mut step: impl FnMut(&History) -> StepRow,
        mut output: impl FnMut(&History) -> Vec<f64>,
    ) -> Result<Self> {
        let mut stack: Vec<History> = (0..self.external_card).rev().map(History::new).collect();
        while let Some(h) = stack.pop() {
            if h.moves.len() == self.n {
                let row = output(&h);
                self.set_output_row(h, row)?;
                continue;
            }
            let row = step(&h);
            self.set_step_row(h.clone(), row)?;
            let mut children = Vec::new();
            for &(bx, input, q) in self.step_row(&h).iter() {
                if q <= 0.0 {
                    continue;
                }
                for o in 0..self.box_output_cards[bx] {
                    let mut c = h.clone();
                    c.moves.push(Move {
                        box_index: bx,
                        input,
                        output: o,
                    });
                    children.push(c);
                }
            }
            stack.extend(children.into_iter().rev());
        }
        Ok(self)
    }

    pub fn set_step_row(&mut self, h: History, mut row: StepRow) -> Result<()> {
        self.check_history(&h, false)?;
        let used = h.used(self.n);
        for &(bx, input, _) in &row {
            if bx >= self.n || used[bx] {
                return Err(Error::InvalidStrategy(format!(
                    "history {h} may not choose box {bx}"
                )));
            }
            if input >= self.input_cards[bx] {
                return Err(Error::InvalidStrategy(format!(
                    "input {input} is out of range for box {bx}"
                )));
            }
        }
        let mut probs: Vec<f64> = row.iter().map(|r| r.2).collect();
        normalize_row(&mut probs, &|| format!("step row for history {h}"))?;
        row.iter_mut().zip(probs).for_each(|(r, p)| r.2 = p);
        row.retain(|r| r.2 > 0.0);
        let j = h.moves.len();
        self.steps[j].insert(h, row);
        Ok(())
    }

    pub fn set_output_row(&mut self, h: History, mut row: Vec<f64>) -> Result<()> {
        self.check_history(&h, true)?;
        if row.len() != self.output_card {
            return Err(Error::InvalidStrategy(format!(
                "output row for history {h} has {} entries, expected {}",
                row.len(),
                self.output_card
            )));
        }
        normalize_row(&mut row, &|| format!("output row for history {h}"))?;
        self.output.insert(h, row);
        Ok(())
    }

    fn check_history(&self, h: &History, complete: bool) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidStrategy(format!("history {h}: {why}")));
        if h.external >= self.external_card {
            return bad("external input out of range");
        }
        if complete && h.moves.len() != self.n {
            return bad("output rows need a complete history");
        }
        if !complete && h.moves.len() >= self.n {
            return bad("step rows need an incomplete history");
        }
        let mut used = vec![false; self.n];
        for m in &h.moves {
            if m.box_index >= self.n || used[m.box_index] {
                return bad("boxes must be distinct and in range");
            }
            used[m.box_index] = true;
            if m.input >= self.input_cards[m.box_index]
                || m.output >= self.box_output_cards[m.box_index]
            {
                return bad("input or output out of range");
            }
        }
        Ok(())
    }

    /// The row used at history `h`, falling back to uniform.
    pub fn step_row(&self, h: &History) -> std::borrow::Cow<'_, StepRow> {
        if let Some(row) = self.steps[h.moves.len()].get(h) {
            return std::borrow::Cow::Borrowed(row);
        }
        let used = h.used(self.n);
        let choices: usize = (0..self.n)
            .filter(|&i| !used[i])
            .map(|i| self.input_cards[i])
            .sum();
        let q = 1.0 / choices as f64;
        std::borrow::Cow::Owned(
            (0..self.n)
                .filter(|&i| !used[i])
                .flat_map(|i| (0..self.input_cards[i]).map(move |x| (i, x, q)))
                .collect(),
        )
    }

    pub fn output_row(&self, h: &History) -> std::borrow::Cow<'_, Vec<f64>> {
        match self.output.get(h) {
            Some(row) => std::borrow::Cow::Borrowed(row),
            None => std::borrow::Cow::Owned(vec![1.0 / self.output_card as f64; self.output_card]),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn external_card(&self) -> usize {
        self.external_card
    }

    pub fn output_card(&self) -> usize {
        self.output_card
    }

    pub fn input_cards(&self) -> &[usize] {
        &self.input_cards
    }

    pub fn box_output_cards(&self) -> &[usize] {
        &self.box_output_cards
    }

    /// Stored step rows for step `j` (0-based), sorted by history.
    pub fn step_rows(&self, j: usize) -> Vec<(&History, &StepRow)> {
        let mut rows: Vec<_> = self.steps[j].iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows
    }

    pub fn output_rows(&self) -> Vec<(&History, &Vec<f64>)> {
        let mut rows: Vec<_> = self.output.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows
    }

    /// True when every stored row puts all its mass on one choice.
    pub fn is_deterministic(&self) -> bool {
        self.steps
            .iter()
            .flat_map(|m| m.values())
            .all(|r| r.len() == 1)
            && self
                .output
                .values()
                .all(|r| r.iter().filter(|&&p| p > 0.0).count() == 1)
    }

    /// All paths from external input `external`, in depth-first order.
    pub fn paths(&self, external: usize) -> Vec<Path> {
        let mut out = Vec::new();
        let mut h = History::new(external);
        self.walk(&mut h, 1.0, &mut out);
        out
    }

    fn walk(&self, h: &mut History, weight: f64, out: &mut Vec<Path>) {
        if h.moves.len() == self.n {
            out.push(Path::new(
                h.moves.clone(),
                weight,
                self.output_row(h).into_owned(),
            ));
            return;
        }
        let row = self.step_row(h).into_owned();
        for (bx, input, q) in row {
            if q <= 0.0 {
                continue;
            }
            for o in 0..self.box_output_cards[bx] {
                h.moves.push(Move {
                    box_index: bx,
                    input,
                    output: o,
                });
                self.walk(h, weight * q, out);
                h.moves.pop();
            }
        }
    }
}

/// One complete record of a party: the moves in order of use, the product of
/// its strategy probabilities and the distribution of its final output.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub moves: Vec<Move>,
    pub weight: f64,
    pub output: Vec<f64>,
    /// `(input, output)` of each box, indexed by box.
    pub io: Vec<(usize, usize)>,
    /// Step (0-based) at which each box was used.
    pub position: Vec<usize>,
}

impl Path {
    fn new(moves: Vec<Move>, weight: f64, output: Vec<f64>) -> Self {
        let n = moves.len();
        let mut io = vec![(0, 0); n];
        let mut position = vec![0; n];
        for (j, m) in moves.iter().enumerate() {
            io[m.box_index] = (m.input, m.output);
            position[m.box_index] = j;
        }
        Path {
            moves,
            weight,
            output,
            io,
            position,
        }
    }

    /// Box used at each step.
    pub fn order(&self) -> Vec<usize> {
        self.moves.iter().map(|m| m.box_index).collect()
    }
}

/// Lexicographic rank of a permutation of `0..n`.
pub fn permutation_rank(order: &[usize]) -> usize {
    let n = order.len();
    let mut rank = 0;
    for i in 0..n {
        let smaller = order[i + 1..].iter().filter(|&&v| v < order[i]).count();
        rank = rank * (n - i) + smaller;
    }
    rank
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Boxes plus the two local strategies.
#[derive(Clone, Debug, PartialEq)]
pub struct WiringInstance {
    boxes: Vec<NoSignalingBox>,
    alice: PartyStrategy,
    bob: PartyStrategy,
}

impl WiringInstance {
    pub fn new(
        boxes: Vec<NoSignalingBox>,
        alice: PartyStrategy,
        bob: PartyStrategy,
    ) -> Result<Self> {
        let n = boxes.len();
        if n == 0 {
            return Err(Error::InvalidWiring(
                "a wiring needs at least one box".into(),
            ));
        }
        if n > MAX_BOXES {
            return Err(Error::TooManyBoxes { n, cap: MAX_BOXES });
        }
        for (party, s) in [(Party::Alice, &alice), (Party::Bob, &bob)] {
            let (inputs, outputs) = side_cards(&boxes, party);
            if s.n != n || s.input_cards != inputs || s.box_output_cards != outputs {
                return Err(Error::InvalidWiring(format!(
                    "{party:?}'s strategy does not match the boxes' alphabets"
                )));
            }
        }
        Ok(WiringInstance { boxes, alice, bob })
    }

    pub fn boxes(&self) -> &[NoSignalingBox] {
        &self.boxes
    }

    pub fn alice(&self) -> &PartyStrategy {
        &self.alice
    }

    pub fn bob(&self) -> &PartyStrategy {
        &self.bob
    }

    pub fn n(&self) -> usize {
        self.boxes.len()
    }

    /// `prod_i p_i(a_i b_i | x_i y_i)` for a pair of paths.
    fn box_product(&self, pa: &Path, pb: &Path) -> f64 {
        let mut prod = 1.0;
        for (i, bx) in self.boxes.iter().enumerate() {
            let (x, a) = pa.io[i];
            let (y, b) = pb.io[i];
            prod *= bx.get(x, y, a, b);
            if prod == 0.0 {
                break;
            }
        }
        prod
    }
}

/// The joint law of both parties' records for fixed external inputs, stored
/// as the positive-probability pairs of paths.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryJoint {
    pub x_prime: usize,
    pub y_prime: usize,
    pub n: usize,
    pub alice_paths: Vec<Path>,
    pub bob_paths: Vec<Path>,
    /// `(alice path, bob path, probability)`.
    pub entries: Vec<(u32, u32, f64)>,
}

impl TrajectoryJoint {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// Dense table over `a_i, b_i, x_i, y_i` (box order) and the two
    /// permutation ranks `pi`, `omega`.
    pub fn to_table(&self, boxes: &[NoSignalingBox]) -> Result<TableDistribution> {
        let n = self.n;
        let mut vars: Vec<(String, usize)> = Vec::new();
        for (i, b) in boxes.iter().enumerate() {
            vars.push((format!("a{}", i + 1), b.a_card()));
            vars.push((format!("b{}", i + 1), b.b_card()));
            vars.push((format!("x{}", i + 1), b.x_card()));
            vars.push((format!("y{}", i + 1), b.y_card()));
        }
        vars.push(("pi".into(), factorial(n)));
        vars.push(("omega".into(), factorial(n)));
        let size = table_size(vars.iter().map(|v| v.1))?;
        if size > MAX_TABLE_ENTRIES {
            return Err(Error::TableTooLarge {
                entries: size,
                cap: MAX_TABLE_ENTRIES,
            });
        }
        let cards: Vec<usize> = vars.iter().map(|v| v.1).collect();
        let mut probs = vec![0.0; size];
        for &(ia, ib, p) in &self.entries {
            let pa = &self.alice_paths[ia as usize];
            let pb = &self.bob_paths[ib as usize];
            let mut assignment = Vec::with_capacity(cards.len());
            for i in 0..n {
                assignment.extend([pa.io[i].1, pb.io[i].1, pa.io[i].0, pb.io[i].0]);
            }
            assignment.push(permutation_rank(&pa.order()));
            assignment.push(permutation_rank(&pb.order()));
            let idx = assignment
                .iter()
                .zip(&cards)
                .fold(0, |acc, (&v, &c)| acc * c + v);
            probs[idx] += p;
        }
        TableDistribution::new(vars, probs)
    }
}

/// Enumerates the trajectory joint for external inputs `(x', y')`.
pub fn execute(
    instance: &WiringInstance,
    x_prime: usize,
    y_prime: usize,
) -> Result<TrajectoryJoint> {
    if x_prime >= instance.alice.external_card || y_prime >= instance.bob.external_card {
        return Err(Error::IndexOutOfRange(format!(
            "external inputs ({x_prime}, {y_prime})"
        )));
    }
    let alice_paths = instance.alice.paths(x_prime);
    let bob_paths = instance.bob.paths(y_prime);
    let chunks: Vec<Vec<(u32, u32, f64)>> = alice_paths
        .par_iter()
        .enumerate()
        .map(|(ia, pa)| {
            bob_paths
                .iter()
                .enumerate()
                .filter_map(|(ib, pb)| {
                    let p = pa.weight * pb.weight * instance.box_product(pa, pb);
                    (p > 0.0).then_some((ia as u32, ib as u32, p))
                })
                .collect()
        })
        .collect();
    Ok(TrajectoryJoint {
        x_prime,
        y_prime,
        n: instance.n(),
        alice_paths,
        bob_paths,
        entries: chunks.into_iter().flatten().collect(),
    })
}

/// The box `p(a', b' | x', y')` produced by the wiring. Pairs of paths are
/// streamed, not stored.
pub fn derived_box(instance: &WiringInstance) -> Result<NoSignalingBox> {
    let (xc, yc) = (instance.alice.external_card, instance.bob.external_card);
    let (ac, bc) = (instance.alice.output_card, instance.bob.output_card);
    let alice: Vec<Vec<Path>> = (0..xc).map(|x| instance.alice.paths(x)).collect();
    let bob: Vec<Vec<Path>> = (0..yc).map(|y| instance.bob.paths(y)).collect();
    let mut table = Vec::with_capacity(xc * yc * ac * bc);
    for alice_paths in &alice {
        for bob_paths in &bob {
            let partials: Vec<Vec<f64>> = alice_paths
                .par_iter()
                .map(|pa| {
                    let mut local = vec![0.0; ac * bc];
                    for pb in bob_paths {
                        let p = pa.weight * pb.weight * instance.box_product(pa, pb);
                        if p == 0.0 {
                            continue;
                        }
                        for (a, &qa) in pa.output.iter().enumerate() {
                            if qa == 0.0 {
                                continue;
                            }
                            for (b, &qb) in pb.output.iter().enumerate() {
                                local[a * bc + b] += p * qa * qb;
                            }
                        }
                    }
                    local
                })
                .collect();
            let mut block = vec![0.0; ac * bc];
            for part in partials {
                block.iter_mut().zip(part).for_each(|(acc, v)| *acc += v);
            }
            table.extend(block);
        }
    }
    Ok(NoSignalingBox::validate(
        xc,
        yc,
        ac,
        bc,
        table,
        NS_TOLERANCE,
    )?)
}

/// Final output of a sequential chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputSelector {
    /// Output of the last box.
    Last,
    /// Output of box `i` (0-based).
    Box(usize),
    /// Sum of all outputs modulo the common output alphabet size.
    Parity,
}

/// The fixed-order chain `x_1 = x'`, `x_{i+1} = a_i` (and likewise for Bob).
pub fn sequential_chain(
    boxes: Vec<NoSignalingBox>,
    selector: OutputSelector,
) -> Result<WiringInstance> {
    let n = boxes.len();
    if n == 0 {
        return Err(Error::InvalidWiring(
            "a chain needs at least one box".into(),
        ));
    }
    if n > MAX_BOXES {
        return Err(Error::TooManyBoxes { n, cap: MAX_BOXES });
    }
    for i in 0..n - 1 {
        if boxes[i].a_card() != boxes[i + 1].x_card() || boxes[i].b_card() != boxes[i + 1].y_card()
        {
            return Err(Error::InvalidWiring(format!(
                "link {} -> {}: outputs {}x{} cannot feed inputs {}x{}",
                i,
                i + 1,
                boxes[i].a_card(),
                boxes[i].b_card(),
                boxes[i + 1].x_card(),
                boxes[i + 1].y_card()
            )));
        }
    }
    let build = |party: Party| -> Result<PartyStrategy> {
        let (inputs, outputs) = side_cards(&boxes, party);
        let out_card = match selector {
            OutputSelector::Last => outputs[n - 1],
            OutputSelector::Box(i) => *outputs
                .get(i)
                .ok_or_else(|| Error::InvalidWiring(format!("box {i} does not exist")))?,
            OutputSelector::Parity => {
                if outputs.iter().any(|&c| c != outputs[0]) {
                    return Err(Error::InvalidWiring(
                        "parity needs equal output alphabets".into(),
                    ));
                }
                outputs[0]
            }
        };
        let external = inputs[0];
        PartyStrategy::uniform(inputs, outputs, external, out_card)?.from_policy(
            |h| {
                let j = h.moves.len();
                let input = h.moves.last().map_or(h.external, |m| m.output);
                vec![(j, input, 1.0)]
            },
            |h| {
                let value = match selector {
                    OutputSelector::Last => h.moves[n - 1].output,
                    OutputSelector::Box(i) => {
                        h.moves
                            .iter()
                            .find(|m| m.box_index == i)
                            .expect("all boxes used")
                            .output
                    }
                    OutputSelector::Parity => {
                        h.moves.iter().map(|m| m.output).sum::<usize>() % out_card
                    }
                };
                let mut row = vec![0.0; out_card];
                row[value] = 1.0;
                row
            },
        )
    };
    let alice = build(Party::Alice)?;
    let bob = build(Party::Bob)?;
    WiringInstance::new(boxes, alice, bob)
}

/// The wiring that feeds `x'` into a single box and returns its output.
pub fn identity_wiring(b: NoSignalingBox) -> Result<WiringInstance> {
    sequential_chain(vec![b], OutputSelector::Last)
}

/// A strategy with independently drawn rows for every reachable history:
/// Dirichlet(1) rows, or uniformly chosen one-hot rows when `deterministic`.
/// Reproducible from `seed`.
pub fn random_strategy(
    boxes: &[NoSignalingBox],
    party: Party,
    external_card: usize,
    output_card: usize,
    seed: u64,
    deterministic: bool,
) -> Result<PartyStrategy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = PartyStrategy::for_boxes(boxes, party, external_card, output_card)?;
    let n = base.n;
    let input_cards = base.input_cards.clone();
    let rng = std::cell::RefCell::new(&mut rng);
    base.from_policy(
        |h| {
            let used = h.used(n);
            let choices: Vec<(usize, usize)> = (0..n)
                .filter(|&i| !used[i])
                .flat_map(|i| (0..input_cards[i]).map(move |x| (i, x)))
                .collect();
            let mut rng = rng.borrow_mut();
            if deterministic {
                let (i, x) = choices[rng.random_range(0..choices.len())];
                vec![(i, x, 1.0)]
            } else {
                let w = random_simplex(&mut rng, choices.len());
                choices
                    .into_iter()
                    .zip(w)
                    .map(|((i, x), q)| (i, x, q))
                    .collect()
            }
        },
        |_| {
            let mut rng = rng.borrow_mut();
            if deterministic {
                let mut row = vec![0.0; output_card];
                row[rng.random_range(0..output_card)] = 1.0;
                row
            } else {
                random_simplex(&mut rng, output_card)
            }
        },
    )
}

/// A random instance: both parties get [`random_strategy`] tables with
/// external and final alphabets of size `card`.
pub fn random_instance(
    boxes: Vec<NoSignalingBox>,
    card: usize,
    seed: u64,
    deterministic: bool,
) -> Result<WiringInstance> {
    let seeds = crate::seeds::derive_seeds(seed, 2);
    let alice = random_strategy(&boxes, Party::Alice, card, card, seeds[0], deterministic)?;
    let bob = random_strategy(&boxes, Party::Bob, card, card, seeds[1], deterministic)?;
    WiringInstance::new(boxes, alice, bob)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pr(eta: f64) -> NoSignalingBox {
        NoSignalingBox::isotropic(eta).unwrap()
    }

    #[test]
    fn history_keys_round_trip() {
        let h = History {
            external: 1,
            moves: vec![Move {
                box_index: 2,
                input: 0,
                output: 1,
            }],
        };
        assert_eq!(h.key(), "1|2,0,1");
        assert_eq!(History::parse("1|2,0,1").unwrap(), h);
        assert_eq!(History::parse("0").unwrap(), History::new(0));
        assert!(History::parse("0|1,2").is_err());
    }

    #[test]
    fn permutation_ranks() {
        assert_eq!(permutation_rank(&[0, 1, 2]), 0);
        assert_eq!(permutation_rank(&[2, 1, 0]), 5);
        assert_eq!(permutation_rank(&[1, 0]), 1);
    }

    #[test]
    fn identity_wiring_reproduces_the_box() {
        let b = pr(0.7);
        let w = identity_wiring(b.clone()).unwrap();
        assert!(derived_box(&w).unwrap().max_abs_diff(&b) < 1e-12);
        let t = execute(&w, 1, 1).unwrap();
        assert!((t.total_mass() - 1.0).abs() < 1e-12);
        for &(ia, ib, p) in &t.entries {
            let (a, b_) = (
                t.alice_paths[ia as usize].io[0].1,
                t.bob_paths[ib as usize].io[0].1,
            );
            assert!((p - b.get(1, 1, a, b_)).abs() < 1e-15);
        }
    }

    #[test]
    fn two_pr_one_chain_has_half_products() {
        let w = sequential_chain(vec![pr(1.0), pr(1.0)], OutputSelector::Last).unwrap();
        for (x, y) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let t = execute(&w, x, y).unwrap();
            assert_eq!(t.entries.len(), 4);
            for e in &t.entries {
                assert!((e.2 - 0.25).abs() < 1e-15);
            }
        }
        assert!(w.alice().is_deterministic());
    }

    #[test]
    fn noise_in_noise_out() {
        let w = sequential_chain(vec![pr(0.0), pr(0.0)], OutputSelector::Last).unwrap();
        assert!(derived_box(&w).unwrap().max_abs_diff(&pr(0.0)) < 1e-15);
    }

    #[test]
    fn chain_alphabet_mismatch_names_the_link() {
        let big = NoSignalingBox::from_fn(2, 2, 3, 2, |_, _, _, _| 1.0 / 6.0).unwrap();
        let err = sequential_chain(vec![big, pr(0.5)], OutputSelector::Last).unwrap_err();
        assert!(err.to_string().contains("link 0 -> 1"));
    }

    #[test]
    fn too_many_boxes() {
        let boxes = vec![pr(0.5); 5];
        assert!(matches!(
            sequential_chain(boxes, OutputSelector::Last),
            Err(Error::TooManyBoxes { n: 5, cap: 4 })
        ));
    }

    #[test]
    fn random_strategies_are_reproducible_and_valid() {
        let boxes = vec![pr(0.9), pr(0.4)];
        let s1 = random_strategy(&boxes, Party::Alice, 2, 2, 11, false).unwrap();
        let s2 = random_strategy(&boxes, Party::Alice, 2, 2, 11, false).unwrap();
        assert_eq!(s1, s2);
        let d = random_strategy(&boxes, Party::Bob, 2, 2, 11, true).unwrap();
        assert!(d.is_deterministic());
        let w = random_instance(boxes, 2, 5, false).unwrap();
        derived_box(&w).unwrap();
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let boxes = vec![pr(0.5), pr(0.5)];
        let mut s = PartyStrategy::for_boxes(&boxes, Party::Alice, 2, 2).unwrap();
        assert!(s
            .set_step_row(History::new(0), vec![(0, 0, 0.5), (1, 0, 0.4)])
            .is_err());
        let h = History {
            external: 0,
            moves: vec![Move {
                box_index: 0,
                input: 0,
                output: 0,
            }],
        };
        assert!(s.set_step_row(h, vec![(0, 1, 1.0)]).is_err());
        s.set_step_row(History::new(0), vec![(0, 0, 0.5), (1, 0, 0.5 + 1e-13)])
            .unwrap();
    }

    #[test]
    fn uniform_default_rows() {
        let boxes = vec![pr(0.5), pr(0.5)];
        let s = PartyStrategy::for_boxes(&boxes, Party::Alice, 1, 2).unwrap();
        // 4 first moves x 2 outputs, then 2 moves x 2 outputs
        assert_eq!(s.paths(0).len(), 32);
        let total: f64 = s.paths(0).iter().map(|p| p.weight).sum();
        // one unit of weight per assignment of box outputs
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn table_view_has_the_box_marginals() {
        let w = random_instance(vec![pr(0.8), pr(0.3)], 2, 3, false).unwrap();
        let t = execute(&w, 0, 1).unwrap();
        let table = t.to_table(w.boxes()).unwrap();
        let m = table.marginal(&["x2", "y2", "a2", "b2"]).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let mass: f64 = (0..2)
                    .flat_map(|a| (0..2).map(move |b| (a, b)))
                    .map(|(a, b)| m.get(&[x, y, a, b]))
                    .sum();
                if mass < 1e-9 {
                    continue;
                }
                for a in 0..2 {
                    for b in 0..2 {
                        assert!(
                            (m.get(&[x, y, a, b]) / mass - w.boxes()[1].get(x, y, a, b)).abs()
                                < 1e-10
                        );
                    }
                }
            }
        }
    }
}
