//! Bipartite no-signaling boxes `p(a, b | x, y)`.
//!
//! A box is stored as its raw conditional table with index order
//! `[x][y][a][b]`; the binary `(alpha, beta, zeta)` parametrization is a view
//! computed on demand.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{JointDistribution, Side};

/// Default tolerance for normalization and no-signaling checks.
pub const NS_TOLERANCE: f64 = 1e-9;

/// The worst constraint a raw table violates.
#[derive(Clone, Debug, PartialEq)]
pub enum BoxViolation {
    Shape(String),
    NegativeEntry {
        x: usize,
        y: usize,
        a: usize,
        b: usize,
        value: f64,
    },
    NotNormalized {
        x: usize,
        y: usize,
        deficit: f64,
    },
    /// The output marginal of `side` at its own input `input` changes when
    /// the other party switches between `other_inputs`.
    Signaling {
        side: Side,
        input: usize,
        other_inputs: (usize, usize),
        deviation: f64,
    },
}

impl fmt::Display for BoxViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxViolation::Shape(s) => write!(f, "Shape: {s}"),
            BoxViolation::NegativeEntry { x, y, a, b, value } => {
                write!(f, "NegativeEntry: p({a},{b}|{x},{y}) = {value:e}")
            }
            BoxViolation::NotNormalized { x, y, deficit } => {
                write!(
                    f,
                    "NotNormalized: inputs ({x},{y}) miss {deficit:e} of probability mass"
                )
            }
            BoxViolation::Signaling {
                side,
                input,
                other_inputs,
                deviation,
            } => {
                let (who, other) = match side {
                    Side::A => ("Alice", "y"),
                    Side::B => ("Bob", "x"),
                };
                write!(
                    f,
                    "Signaling: {who}'s marginal at input {input} differs between {other}={} and {other}={} by {deviation:e}",
                    other_inputs.0, other_inputs.1
                )
            }
        }
    }
}

/// A validated no-signaling box.
#[derive(Clone, Debug, PartialEq)]
pub struct NoSignalingBox {
    x_card: usize,
    y_card: usize,
    a_card: usize,
    b_card: usize,
    p: Vec<f64>,
}

impl NoSignalingBox {
    /// Validates a raw `[x][y][a][b]` table. Entries in `[-tolerance, 0)`
    /// are clamped to zero and each input block is renormalized.
    pub fn validate(
        x_card: usize,
        y_card: usize,
        a_card: usize,
        b_card: usize,
        p: Vec<f64>,
        tolerance: f64,
    ) -> Result<Self, BoxViolation> {
        if x_card == 0 || y_card == 0 || a_card == 0 || b_card == 0 {
            return Err(BoxViolation::Shape(
                "all cardinalities must be positive".into(),
            ));
        }
        let size = x_card * y_card * a_card * b_card;
        if p.len() != size {
            return Err(BoxViolation::Shape(format!(
                "expected {size} entries, got {}",
                p.len()
            )));
        }
        let mut raw = NoSignalingBox {
            x_card,
            y_card,
            a_card,
            b_card,
            p,
        };

        let mut worst_negative: Option<(f64, [usize; 4])> = None;
        for x in 0..x_card {
            for y in 0..y_card {
                for a in 0..a_card {
                    for b in 0..b_card {
                        let v = raw.get(x, y, a, b);
                        if !v.is_finite() {
                            return Err(BoxViolation::Shape(format!(
                                "p({a},{b}|{x},{y}) is not finite"
                            )));
                        }
                        if v < -tolerance && worst_negative.is_none_or(|(w, _)| v < w) {
                            worst_negative = Some((v, [x, y, a, b]));
                        }
                    }
                }
            }
        }
        if let Some((value, [x, y, a, b])) = worst_negative {
            return Err(BoxViolation::NegativeEntry { x, y, a, b, value });
        }
        raw.p.iter_mut().for_each(|v| *v = v.max(0.0));

        let mut worst_norm: Option<(f64, usize, usize)> = None;
        for x in 0..x_card {
            for y in 0..y_card {
                let deficit = 1.0 - raw.block(x, y).iter().sum::<f64>();
                if deficit.abs() > tolerance
                    && worst_norm.is_none_or(|(w, _, _)| deficit.abs() > w.abs())
                {
                    worst_norm = Some((deficit, x, y));
                }
            }
        }
        if let Some((deficit, x, y)) = worst_norm {
            return Err(BoxViolation::NotNormalized { x, y, deficit });
        }

        let mut worst: Option<BoxViolation> = None;
        let mut worst_dev = tolerance;
        for x in 0..x_card {
            let base = raw.alice_marginal_at(x, 0);
            for y in 1..y_card {
                let dev = max_abs_diff(&base, &raw.alice_marginal_at(x, y));
                if dev > worst_dev {
                    worst_dev = dev;
                    worst = Some(BoxViolation::Signaling {
                        side: Side::A,
                        input: x,
                        other_inputs: (0, y),
                        deviation: dev,
                    });
                }
            }
        }
        for y in 0..y_card {
            let base = raw.bob_marginal_at(0, y);
            for x in 1..x_card {
                let dev = max_abs_diff(&base, &raw.bob_marginal_at(x, y));
                if dev > worst_dev {
                    worst_dev = dev;
                    worst = Some(BoxViolation::Signaling {
                        side: Side::B,
                        input: y,
                        other_inputs: (0, x),
                        deviation: dev,
                    });
                }
            }
        }
        if let Some(v) = worst {
            return Err(v);
        }

        for x in 0..x_card {
            for y in 0..y_card {
                let start = raw.offset(x, y, 0, 0);
                let block = &mut raw.p[start..start + a_card * b_card];
                let total: f64 = block.iter().sum();
                block.iter_mut().for_each(|v| *v /= total);
            }
        }
        Ok(raw)
    }

    /// Builds a box from `f(x, y, a, b)` and validates it.
    pub fn from_fn(
        x_card: usize,
        y_card: usize,
        a_card: usize,
        b_card: usize,
        f: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut p = Vec::with_capacity(x_card * y_card * a_card * b_card);
        for x in 0..x_card {
            for y in 0..y_card {
                for a in 0..a_card {
                    for b in 0..b_card {
                        p.push(f(x, y, a, b));
                    }
                }
            }
        }
        Ok(Self::validate(
            x_card,
            y_card,
            a_card,
            b_card,
            p,
            NS_TOLERANCE,
        )?)
    }

    /// The isotropic box: `(1 + eta)/4` when `a xor b = x y`, else `(1 - eta)/4`.
    pub fn isotropic(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::OutOfRange(format!("eta = {eta} is outside [0, 1]")));
        }
        Self::from_fn(2, 2, 2, 2, |x, y, a, b| {
            if a ^ b == x & y {
                (1.0 + eta) / 4.0
            } else {
                (1.0 - eta) / 4.0
            }
        })
    }

    /// Product box `p(a|x) p(b|y)`; `alice[x][a]`, `bob[y][b]`.
    pub fn product(alice: &[Vec<f64>], bob: &[Vec<f64>]) -> Result<Self> {
        let a_card = alice.first().map_or(0, Vec::len);
        let b_card = bob.first().map_or(0, Vec::len);
        if alice.iter().any(|r| r.len() != a_card) || bob.iter().any(|r| r.len() != b_card) {
            return Err(Error::ShapeMismatch("ragged local response table".into()));
        }
        Self::from_fn(alice.len(), bob.len(), a_card, b_card, |x, y, a, b| {
            alice[x][a] * bob[y][b]
        })
    }

    /// Local deterministic box `a = alice[x]`, `b = bob[y]`.
    pub fn deterministic(
        alice: &[usize],
        bob: &[usize],
        a_card: usize,
        b_card: usize,
    ) -> Result<Self> {
        Self::from_fn(alice.len(), bob.len(), a_card, b_card, |x, y, a, b| {
            f64::from(u8::from(alice[x] == a && bob[y] == b))
        })
    }

    #[inline]
    fn offset(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        ((x * self.y_card + y) * self.a_card + a) * self.b_card + b
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.p[self.offset(x, y, a, b)]
    }

    /// The `a_card * b_card` block of `p(., . | x, y)`, row-major in `(a, b)`.
    pub fn block(&self, x: usize, y: usize) -> &[f64] {
        let start = self.offset(x, y, 0, 0);
        &self.p[start..start + self.a_card * self.b_card]
    }

    pub fn table(&self) -> &[f64] {
        &self.p
    }

    pub fn x_card(&self) -> usize {
        self.x_card
    }

    pub fn y_card(&self) -> usize {
        self.y_card
    }

    pub fn a_card(&self) -> usize {
        self.a_card
    }

    pub fn b_card(&self) -> usize {
        self.b_card
    }

    pub fn is_binary(&self) -> bool {
        self.x_card == 2 && self.y_card == 2 && self.a_card == 2 && self.b_card == 2
    }

    pub fn same_shape(&self, other: &NoSignalingBox) -> bool {
        (self.x_card, self.y_card, self.a_card, self.b_card)
            == (other.x_card, other.y_card, other.a_card, other.b_card)
    }

    fn alice_marginal_at(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.a_card)
            .map(|a| (0..self.b_card).map(|b| self.get(x, y, a, b)).sum())
            .collect()
    }

    fn bob_marginal_at(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.b_card)
            .map(|b| (0..self.a_card).map(|a| self.get(x, y, a, b)).sum())
            .collect()
    }

    /// `p(a | x)`, read at `y = 0`.
    pub fn alice_marginal(&self, x: usize) -> Vec<f64> {
        self.alice_marginal_at(x, 0)
    }

    /// `p(b | y)`, read at `x = 0`.
    pub fn bob_marginal(&self, y: usize) -> Vec<f64> {
        self.bob_marginal_at(0, y)
    }

    /// The output law at fixed inputs.
    pub fn conditional_joint(&self, x: usize, y: usize) -> Result<JointDistribution> {
        if x >= self.x_card || y >= self.y_card {
            return Err(Error::IndexOutOfRange(format!(
                "inputs ({x}, {y}) outside {}x{}",
                self.x_card, self.y_card
            )));
        }
        JointDistribution::new(self.a_card, self.b_card, self.block(x, y).to_vec())
    }

    /// All `(x, y)` input pairs in lexicographic order.
    pub fn input_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.x_card).flat_map(move |x| (0..self.y_card).map(move |y| (x, y)))
    }

    /// Winning probability of the CHSH game, `(1/4) sum delta(a xor b, xy) p(a,b|x,y)`.
    pub fn chsh_value(&self) -> Result<f64> {
        if !self.is_binary() {
            return Err(Error::NotBinary(self.shape_string()));
        }
        let mut total = 0.0;
        for (x, y) in self.input_pairs() {
            for a in 0..2 {
                for b in 0..2 {
                    if a ^ b == x & y {
                        total += self.get(x, y, a, b);
                    }
                }
            }
        }
        Ok(total / 4.0)
    }

    pub fn to_binary_params(&self) -> Result<BinaryBoxParams> {
        if !self.is_binary() {
            return Err(Error::NotBinary(self.shape_string()));
        }
        let sign = |s: usize| if s == 0 { 1.0 } else { -1.0 };
        let mut alpha = [0.0; 2];
        let mut beta = [0.0; 2];
        let mut zeta = [[0.0; 2]; 2];
        for x in 0..2 {
            alpha[x] = self
                .alice_marginal(x)
                .iter()
                .enumerate()
                .map(|(a, p)| sign(a) * p)
                .sum();
        }
        for y in 0..2 {
            beta[y] = self
                .bob_marginal(y)
                .iter()
                .enumerate()
                .map(|(b, p)| sign(b) * p)
                .sum();
        }
        for (x, y) in self.input_pairs() {
            let mut z = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    z += sign(a) * sign(b) * self.get(x, y, a, b);
                }
            }
            zeta[x][y] = z;
        }
        Ok(BinaryBoxParams { alpha, beta, zeta })
    }

    pub fn from_binary_params(params: &BinaryBoxParams) -> Result<Self> {
        params.check(NS_TOLERANCE)?;
        let sign = |s: usize| if s == 0 { 1.0 } else { -1.0 };
        Self::from_fn(2, 2, 2, 2, |x, y, a, b| {
            0.25 * (1.0
                + sign(a) * params.alpha[x]
                + sign(b) * params.beta[y]
                + sign(a) * sign(b) * params.zeta[x][y])
        })
    }

    /// Convex combination `sum_r w_r box_r`.
    pub fn mix(boxes: &[NoSignalingBox], weights: &[f64]) -> Result<Self> {
        let first = boxes
            .first()
            .ok_or_else(|| Error::ShapeMismatch("empty mixture".into()))?;
        if boxes.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} boxes but {} weights",
                boxes.len(),
                weights.len()
            )));
        }
        if let Some(b) = boxes.iter().find(|b| !b.same_shape(first)) {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                first.shape_string(),
                b.shape_string()
            )));
        }
        if weights.iter().any(|&w| w.is_nan() || w < 0.0)
            || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::OutOfRange(
                "mixture weights must be a probability vector".into(),
            ));
        }
        let mut p = vec![0.0; first.p.len()];
        for (b, &w) in boxes.iter().zip(weights) {
            for (acc, v) in p.iter_mut().zip(&b.p) {
                *acc += w * v;
            }
        }
        Ok(Self::validate(
            first.x_card,
            first.y_card,
            first.a_card,
            first.b_card,
            p,
            NS_TOLERANCE,
        )?)
    }

    pub fn shape_string(&self) -> String {
        format!(
            "x{}y{}a{}b{}",
            self.x_card, self.y_card, self.a_card, self.b_card
        )
    }

    /// Largest entrywise difference between two boxes of the same shape.
    pub fn max_abs_diff(&self, other: &NoSignalingBox) -> f64 {
        assert!(self.same_shape(other));
        max_abs_diff(&self.p, &other.p)
    }

    pub fn to_file(&self) -> BoxFile {
        let mut p = vec![vec![vec![vec![0.0; self.b_card]; self.a_card]; self.y_card]; self.x_card];
        for (x, y) in self.input_pairs() {
            for a in 0..self.a_card {
                for b in 0..self.b_card {
                    p[x][y][a][b] = self.get(x, y, a, b);
                }
            }
        }
        BoxFile {
            x_card: self.x_card,
            y_card: self.y_card,
            a_card: self.a_card,
            b_card: self.b_card,
            p,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("box serializes")
    }

    pub fn from_json(text: &str, tolerance: f64) -> Result<Self> {
        let file: BoxFile = serde_json::from_str(text)?;
        file.into_box(tolerance)
    }

    pub fn load(path: impl AsRef<Path>, tolerance: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, tolerance)
    }
}

fn max_abs_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// On-disk box format: `p[x][y][a][b]`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxFile {
    pub x_card: usize,
    pub y_card: usize,
    pub a_card: usize,
    pub b_card: usize,
    pub p: Vec<Vec<Vec<Vec<f64>>>>,
}

impl BoxFile {
    pub fn into_box(self, tolerance: f64) -> Result<NoSignalingBox> {
        let shape_err = |what: &str| Error::InvalidBox(BoxViolation::Shape(what.to_string()));
        if self.p.len() != self.x_card {
            return Err(shape_err("p has the wrong number of x rows"));
        }
        let mut flat = Vec::with_capacity(self.x_card * self.y_card * self.a_card * self.b_card);
        for rows_y in &self.p {
            if rows_y.len() != self.y_card {
                return Err(shape_err("p has the wrong number of y rows"));
            }
            for rows_a in rows_y {
                if rows_a.len() != self.a_card {
                    return Err(shape_err("p has the wrong number of a rows"));
                }
                for rows_b in rows_a {
                    if rows_b.len() != self.b_card {
                        return Err(shape_err("p has the wrong number of b entries"));
                    }
                    flat.extend_from_slice(rows_b);
                }
            }
        }
        Ok(NoSignalingBox::validate(
            self.x_card,
            self.y_card,
            self.a_card,
            self.b_card,
            flat,
            tolerance,
        )?)
    }
}

/// The eight-parameter form of a binary box:
/// `p(a,b|x,y) = (1 + (-1)^a alpha_x + (-1)^b beta_y + (-1)^(a+b) zeta_xy) / 4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryBoxParams {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub zeta: [[f64; 2]; 2],
}

impl BinaryBoxParams {
    /// Parameters of the isotropic box: uniform marginals, `zeta_xy = (-1)^(xy) eta`.
    pub fn isotropic(eta: f64) -> Self {
        BinaryBoxParams {
            alpha: [0.0; 2],
            beta: [0.0; 2],
            zeta: [[eta, eta], [eta, -eta]],
        }
    }

    /// Checks `|alpha_x|, |beta_y| <= 1` and
    /// `|alpha_x + beta_y| - 1 <= zeta_xy <= 1 - |alpha_x - beta_y|`.
    pub fn check(&self, tol: f64) -> Result<()> {
        for x in 0..2 {
            for y in 0..2 {
                let (al, be, z) = (self.alpha[x], self.beta[y], self.zeta[x][y]);
                let reason = if al.abs() > 1.0 + tol {
                    Some(format!("|alpha_{x}| = {} > 1", al.abs()))
                } else if be.abs() > 1.0 + tol {
                    Some(format!("|beta_{y}| = {} > 1", be.abs()))
                } else if z > 1.0 - (al - be).abs() + tol {
                    Some(format!(
                        "zeta = {z} exceeds 1 - |alpha - beta| = {}",
                        1.0 - (al - be).abs()
                    ))
                } else if z < (al + be).abs() - 1.0 - tol {
                    Some(format!(
                        "zeta = {z} is below |alpha + beta| - 1 = {}",
                        (al + be).abs() - 1.0
                    ))
                } else {
                    None
                };
                if let Some(reason) = reason {
                    return Err(Error::BinaryParams { x, y, reason });
                }
            }
        }
        Ok(())
    }

    /// CHSH value in terms of the correlators: `(1/4) sum (1 + (-1)^(xy) zeta_xy)/2`.
    pub fn chsh(&self) -> f64 {
        let mut total = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let s = if x & y == 1 { -1.0 } else { 1.0 };
                total += (1.0 + s * self.zeta[x][y]) / 2.0;
            }
        }
        total / 4.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_entries() {
        let b = NoSignalingBox::isotropic(0.0).unwrap();
        assert!(b.table().iter().all(|&v| v == 0.25));
        let pr = NoSignalingBox::isotropic(1.0).unwrap();
        assert!(pr.table().iter().all(|&v| v == 0.0 || v == 0.5));
        let q = NoSignalingBox::isotropic(std::f64::consts::FRAC_1_SQRT_2).unwrap();
        let hi = (1.0 + std::f64::consts::FRAC_1_SQRT_2) / 4.0;
        let lo = (1.0 - std::f64::consts::FRAC_1_SQRT_2) / 4.0;
        assert!(q
            .table()
            .iter()
            .all(|&v| (v - hi).abs() < 1e-16 || (v - lo).abs() < 1e-16));
        assert!(NoSignalingBox::isotropic(1.2).is_err());
        assert!(NoSignalingBox::isotropic(-0.1).is_err());
    }

    #[test]
    fn isotropic_validates_on_a_grid() {
        for k in 0..=100 {
            NoSignalingBox::isotropic(k as f64 / 100.0).unwrap();
        }
    }

    #[test]
    fn signaling_perturbation_is_reported_with_its_magnitude() {
        let pr = NoSignalingBox::isotropic(0.8).unwrap();
        let mut p = pr.table().to_vec();
        // move 1e-3 of mass from a=1 to a=0 at (x, y) = (0, 1), keeping normalization
        let idx = |x: usize, y: usize, a: usize, b: usize| ((x * 2 + y) * 2 + a) * 2 + b;
        p[idx(0, 1, 0, 0)] += 1e-3;
        p[idx(0, 1, 1, 1)] -= 1e-3;
        let err = NoSignalingBox::validate(2, 2, 2, 2, p, NS_TOLERANCE).unwrap_err();
        match err {
            BoxViolation::Signaling { deviation, .. } => assert!((deviation - 1e-3).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_and_unnormalized_tables() {
        let mut p = vec![0.25; 16];
        p[0] = -0.1;
        p[1] = 0.6;
        assert!(matches!(
            NoSignalingBox::validate(2, 2, 2, 2, p, NS_TOLERANCE),
            Err(BoxViolation::NegativeEntry {
                x: 0,
                y: 0,
                a: 0,
                b: 0,
                ..
            })
        ));
        let mut p = vec![0.25; 16];
        p[5] = 0.2;
        match NoSignalingBox::validate(2, 2, 2, 2, p, NS_TOLERANCE) {
            Err(BoxViolation::NotNormalized {
                x: 0,
                y: 1,
                deficit,
            }) => assert!((deficit - 0.05).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic_box_is_valid() {
        let b = NoSignalingBox::from_fn(2, 2, 2, 2, |x, y, a, b| {
            f64::from(u8::from(a == x && b == y))
        })
        .unwrap();
        assert_eq!(b.get(1, 0, 1, 0), 1.0);
    }

    #[test]
    fn chsh_of_isotropic() {
        for eta in [0.0, 0.3, 0.8, 1.0] {
            let b = NoSignalingBox::isotropic(eta).unwrap();
            assert!((b.chsh_value().unwrap() - (1.0 + eta) / 2.0).abs() < 1e-15);
        }
        let big = NoSignalingBox::from_fn(3, 2, 2, 2, |_, _, _, _| 0.25).unwrap();
        assert!(matches!(big.chsh_value(), Err(Error::NotBinary(_))));
    }

    #[test]
    fn isotropic_params_round_trip() {
        let from = NoSignalingBox::from_binary_params(&BinaryBoxParams::isotropic(0.6)).unwrap();
        assert!(from.max_abs_diff(&NoSignalingBox::isotropic(0.6).unwrap()) < 1e-16);
        let zero = BinaryBoxParams {
            alpha: [0.0; 2],
            beta: [0.0; 2],
            zeta: [[0.0; 2]; 2],
        };
        let uniform = NoSignalingBox::from_binary_params(&zero).unwrap();
        assert!(uniform.table().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn extreme_alpha_pins_zeta() {
        // alpha_0 = 1 forces zeta_0y = beta_y; anything else is rejected
        let ok = BinaryBoxParams {
            alpha: [1.0, 0.0],
            beta: [0.3, -0.5],
            zeta: [[0.3, -0.5], [0.1, 0.2]],
        };
        let b = NoSignalingBox::from_binary_params(&ok).unwrap();
        let back = b.to_binary_params().unwrap();
        assert!((back.zeta[0][0] - 0.3).abs() < 1e-15 && (back.zeta[0][1] + 0.5).abs() < 1e-15);
        let bad = BinaryBoxParams {
            zeta: [[0.4, -0.5], [0.1, 0.2]],
            ..ok
        };
        assert!(matches!(
            NoSignalingBox::from_binary_params(&bad),
            Err(Error::BinaryParams { x: 0, y: 0, .. })
        ));
    }

    #[test]
    fn conditional_joint_of_isotropic() {
        let eta = 0.4;
        let b = NoSignalingBox::isotropic(eta).unwrap();
        let q00 = b.conditional_joint(0, 0).unwrap();
        assert_eq!(q00.get(0, 0), (1.0 + eta) / 4.0);
        assert_eq!(q00.get(0, 1), (1.0 - eta) / 4.0);
        let q11 = b.conditional_joint(1, 1).unwrap();
        // q(a xor 1, b)
        assert_eq!(q11.get(0, 1), (1.0 + eta) / 4.0);
        assert_eq!(q11.get(0, 0), (1.0 - eta) / 4.0);
        assert!(b.conditional_joint(2, 0).is_err());
    }

    #[test]
    fn conditional_of_product_box_is_product() {
        let b = NoSignalingBox::product(
            &[vec![0.2, 0.8], vec![0.5, 0.5]],
            &[vec![0.1, 0.9], vec![1.0, 0.0]],
        )
        .unwrap();
        for (x, y) in b.input_pairs() {
            assert!(b.conditional_joint(x, y).unwrap().is_product(1e-15));
        }
    }

    #[test]
    fn mixtures() {
        let pr1 = NoSignalingBox::isotropic(1.0).unwrap();
        let pr0 = NoSignalingBox::isotropic(0.0).unwrap();
        assert_eq!(
            NoSignalingBox::mix(std::slice::from_ref(&pr1), &[1.0]).unwrap(),
            pr1
        );
        let half = NoSignalingBox::mix(&[pr1.clone(), pr0], &[0.5, 0.5]).unwrap();
        assert!(half.max_abs_diff(&NoSignalingBox::isotropic(0.5).unwrap()) < 1e-16);
        let other = NoSignalingBox::from_fn(3, 2, 2, 2, |_, _, _, _| 0.25).unwrap();
        assert!(matches!(
            NoSignalingBox::mix(&[pr1, other], &[0.5, 0.5]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip_and_shape_errors() {
        let b = NoSignalingBox::isotropic(0.8).unwrap();
        let back = NoSignalingBox::from_json(&b.to_json(), NS_TOLERANCE).unwrap();
        assert_eq!(b, back);
        let bad = r#"{"x_card":2,"y_card":2,"a_card":2,"b_card":2,"p":[[[[0.5,0.5]]]]}"#;
        assert!(matches!(
            NoSignalingBox::from_json(bad, NS_TOLERANCE),
            Err(Error::InvalidBox(BoxViolation::Shape(_)))
        ));
        let unknown = r#"{"x_card":1,"y_card":1,"a_card":1,"b_card":1,"p":[[[[1.0]]]],"q":1}"#;
        assert!(matches!(
            NoSignalingBox::from_json(unknown, NS_TOLERANCE),
            Err(Error::Parse(_))
        ));
    }
}
