//! Learned parameters and the projection/scoring math.
//!
//! Every time bin `t` owns a hyperplane normal `w_t`. A vector `x` is mapped
//! into the bin's subspace by
//!
//! ```text
//! Q_t(x) = x - (w_tᵀ x) w_t
//! ```
//!
//! and a triple `(h, ℓ, ζ)` is scored by the residual norm
//! `‖Q_t(h) + Q_t(ℓ) − Q_t(ζ)‖`. Lower is more plausible.

mod checkpoint;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

/// Norm used for the triple residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Norm {
    #[default]
    L2,
    L1,
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Norm::L2),
            "l1" => Ok(Norm::L1),
            other => Err(Error::InvalidHyperParam(format!("unknown norm `{other}`"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Margin γ of the hinge.
    pub gamma: f64,
    /// Weight α of the temporal smoothness penalty.
    pub alpha: f64,
    /// Weight β of the relation-negative loss inside the hinge.
    pub beta: f64,
    /// Weight ξ of the soft unit-norm penalties.
    pub xi: f64,
    /// Learning rate ψ.
    pub psi: f64,
    /// Maximum number of outer iterations κ.
    pub kappa: usize,
    /// Convergence threshold ε on |ΔJ|.
    pub epsilon: f64,
    /// Negatives drawn per group and positive.
    pub m: usize,
    /// Embedding dimension.
    pub d: usize,
    pub norm: Norm,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            gamma: 10.0,
            alpha: 0.1,
            beta: 0.01,
            xi: 1.0,
            psi: 1e-4,
            kappa: 1000,
            epsilon: 1e-6,
            m: 5,
            d: 128,
            norm: Norm::L2,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidHyperParam(msg.into()));
        let finite = [self.gamma, self.alpha, self.beta, self.xi, self.psi, self.epsilon];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("hyperparameters must be finite");
        }
        if self.gamma <= 0.0 {
            return bad("gamma must be > 0");
        }
        if self.psi <= 0.0 {
            return bad("psi must be > 0");
        }
        if self.m < 1 {
            return bad("m must be >= 1");
        }
        if self.d < 1 {
            return bad("d must be >= 1");
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.xi < 0.0 {
            return bad("alpha, beta and xi must be >= 0");
        }
        Ok(())
    }
}

/// Row-major `rows × dim` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Table { rows, dim, data: vec![0.0; rows * dim] }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{dim} table",
                data.len()
            )));
        }
        Ok(Table { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }
}

/// Entity table (shared by head and tail roles), relation table and one
/// hyperplane normal per time bin.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub entities: Table,
    pub relations: Table,
    pub hyperplanes: Table,
}

impl ModelState {
    pub fn new(entities: Table, relations: Table, hyperplanes: Table) -> Result<Self> {
        let d = entities.dim();
        if relations.dim() != d || hyperplanes.dim() != d {
            return Err(Error::ShapeMismatch("tables disagree on dimension".into()));
        }
        Ok(ModelState { entities, relations, hyperplanes })
    }

    pub fn dim(&self) -> usize {
        self.entities.dim()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.rows()
    }

    pub fn num_bins(&self) -> usize {
        self.hyperplanes.rows()
    }

    pub fn is_finite(&self) -> bool {
        [&self.entities, &self.relations, &self.hyperplanes]
            .iter()
            .all(|t| t.as_slice().iter().all(|v| v.is_finite()))
    }

    /// `w_t / ‖w_t‖`, or the zero vector (identity projection) when `w_t = 0`.
    pub fn unit_hyperplane(&self, bin: usize) -> Vec<f64> {
        normalized(self.hyperplanes.row(bin))
    }
}

/// Uniform `[-6/√d, 6/√d]` entries, then every row scaled to unit L2 norm.
/// Deterministic in `seed`.
pub fn init(
    num_entities: usize,
    num_relations: usize,
    num_bins: usize,
    hp: &HyperParams,
    seed: u64,
) -> Result<ModelState> {
    if num_entities == 0 || num_relations == 0 || num_bins == 0 {
        return Err(Error::InvalidHyperParam("entity, relation and bin counts must be >= 1".into()));
    }
    hp.validate()?;
    let d = hp.d;
    let bound = 6.0 / (d as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = |rows: usize| {
        let mut t = Table::zeros(rows, d);
        for i in 0..rows {
            let row = t.row_mut(i);
            for v in row.iter_mut() {
                *v = dist.sample(&mut rng);
            }
            let n = l2_norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        t
    };
    let entities = table(num_entities);
    let relations = table(num_relations);
    let hyperplanes = table(num_bins);
    Ok(ModelState { entities, relations, hyperplanes })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub(crate) fn normalized(w: &[f64]) -> Vec<f64> {
    let n = l2_norm(w);
    if n > 0.0 {
        w.iter().map(|v| v / n).collect()
    } else {
        vec![0.0; w.len()]
    }
}

/// `x − (wᵀx) w`, with `w` used as given.
///
/// # Panics
///
/// If `x` and `w` differ in length.
pub fn project(x: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), w.len(), "project: dimension mismatch");
    let wx = dot(w, x);
    x.iter().zip(w).map(|(xi, wi)| xi - wx * wi).collect()
}

/// Writes `Q(h) + Q(ℓ) − Q(ζ)` into `out`.
pub(crate) fn residual_into(h: &[f64], l: &[f64], z: &[f64], w: &[f64], out: &mut [f64]) {
    let wh = dot(w, h);
    let wl = dot(w, l);
    let wz = dot(w, z);
    for i in 0..out.len() {
        out[i] = (h[i] - wh * w[i]) + (l[i] - wl * w[i]) - (z[i] - wz * w[i]);
    }
}

pub(crate) fn norm_of(x: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Norm::L1 => x.iter().map(|v| v.abs()).sum(),
    }
}

/// `‖Q(h) + Q(ℓ) − Q(ζ)‖₂` under hyperplane `w`.
///
/// ```
/// use tkge::model::triple_loss;
/// let loss = triple_loss(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[1.0, 0.0]);
/// assert_eq!(loss, 1.0);
/// ```
pub fn triple_loss(h: &[f64], l: &[f64], z: &[f64], w: &[f64]) -> f64 {
    triple_loss_with(h, l, z, w, Norm::L2)
}

pub fn triple_loss_with(h: &[f64], l: &[f64], z: &[f64], w: &[f64], norm: Norm) -> f64 {
    assert!(
        h.len() == w.len() && l.len() == w.len() && z.len() == w.len(),
        "triple_loss: dimension mismatch"
    );
    let wh = dot(w, h);
    let wl = dot(w, l);
    let wz = dot(w, z);
    let mut acc = 0.0;
    for i in 0..w.len() {
        let r = (h[i] - wh * w[i]) + (l[i] - wl * w[i]) - (z[i] - wz * w[i]);
        acc += match norm {
            Norm::L2 => r * r,
            Norm::L1 => r.abs(),
        };
    }
    match norm {
        Norm::L2 => acc.sqrt(),
        Norm::L1 => acc,
    }
}

/// A partial fact with exactly one missing slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Query {
    Head { relation: usize, tail: usize, bin: usize },
    Relation { head: usize, tail: usize, bin: usize },
    Tail { head: usize, relation: usize, bin: usize },
    /// Candidates are bin indices.
    Time { head: usize, relation: usize, tail: usize },
}

impl ModelState {
    fn check(&self, kind: &'static str, id: usize, size: usize) -> Result<()> {
        if id < size {
            Ok(())
        } else {
            Err(Error::IdOutOfRange { kind, id, size })
        }
    }

    fn check_bin(&self, bin: usize) -> Result<()> {
        if bin < self.num_bins() {
            Ok(())
        } else {
            Err(Error::BinOutOfRange { bin, bins: self.num_bins() })
        }
    }

    /// Loss of every candidate filling the query's missing slot, in input
    /// order, under the normalized hyperplane of the query's bin. For
    /// [`Query::Time`] the candidates are bins.
    pub fn score_candidates(&self, query: Query, candidates: &[usize], norm: Norm) -> Result<Vec<f64>> {
        let (ne, nr) = (self.num_entities(), self.num_relations());
        let e = |i| self.entities.row(i);
        let r = |i| self.relations.row(i);
        match query {
            Query::Head { relation, tail, bin } => {
                self.check("relation", relation, nr)?;
                self.check("entity", tail, ne)?;
                self.check_bin(bin)?;
                let w = self.unit_hyperplane(bin);
                candidates
                    .iter()
                    .map(|&c| {
                        self.check("entity", c, ne)?;
                        Ok(triple_loss_with(e(c), r(relation), e(tail), &w, norm))
                    })
                    .collect()
            }
            Query::Relation { head, tail, bin } => {
                self.check("entity", head, ne)?;
                self.check("entity", tail, ne)?;
                self.check_bin(bin)?;
                let w = self.unit_hyperplane(bin);
                candidates
                    .iter()
                    .map(|&c| {
                        self.check("relation", c, nr)?;
                        Ok(triple_loss_with(e(head), r(c), e(tail), &w, norm))
                    })
                    .collect()
            }
            Query::Tail { head, relation, bin } => {
                self.check("entity", head, ne)?;
                self.check("relation", relation, nr)?;
                self.check_bin(bin)?;
                let w = self.unit_hyperplane(bin);
                candidates
                    .iter()
                    .map(|&c| {
                        self.check("entity", c, ne)?;
                        Ok(triple_loss_with(e(head), r(relation), e(c), &w, norm))
                    })
                    .collect()
            }
            Query::Time { head, relation, tail } => {
                self.check("entity", head, ne)?;
                self.check("relation", relation, nr)?;
                self.check("entity", tail, ne)?;
                candidates
                    .iter()
                    .map(|&bin| {
                        self.check_bin(bin)?;
                        let w = self.unit_hyperplane(bin);
                        Ok(triple_loss_with(e(head), r(relation), e(tail), &w, norm))
                    })
                    .collect()
            }
        }
    }
}
