//! Spatio-temporal value networks: summed tile embedding plus normalized
//! context, two ReLU layers, linear head.
//!
//! Parameters are stored as f32; all arithmetic runs in f64.

use crate::action::NUM_ACTIONS;
use crate::geo::{CellId, GeoError};
use crate::state::{NormStats, SpatioTemporalState, CONTEXT_LEN};
use crate::tiles::{EmbeddingTable, TileCoder};
use crate::time::TimeSlot;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 64];
pub const EMBEDDING_INIT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Maps states to network inputs: activated tiles plus normalized context.
/// Tile sets are memoized per (cell, slot).
#[derive(Clone, Debug)]
pub struct Featurizer {
    coder: TileCoder,
    norm: NormStats,
    cache: HashMap<(CellId, TimeSlot), Vec<u32>>,
}

impl Featurizer {
    pub fn new(coder: TileCoder, norm: NormStats) -> Featurizer {
        Featurizer { coder, norm, cache: HashMap::new() }
    }

    pub fn coder(&self) -> &TileCoder {
        &self.coder
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    /// Memoizes the tiles of the given states.
    pub fn warm<'a>(&mut self, states: impl IntoIterator<Item = &'a SpatioTemporalState>) -> Result<(), GeoError> {
        for s in states {
            if !self.cache.contains_key(&s.grid_key()) {
                let tiles = self.coder.activate_tiles(s)?.tile_ids;
                self.cache.insert(s.grid_key(), tiles);
            }
        }
        Ok(())
    }

    pub fn tiles(&self, s: &SpatioTemporalState) -> Result<std::borrow::Cow<'_, [u32]>, GeoError> {
        match self.cache.get(&s.grid_key()) {
            Some(t) => Ok(std::borrow::Cow::Borrowed(t)),
            None => Ok(std::borrow::Cow::Owned(self.coder.activate_tiles(s)?.tile_ids)),
        }
    }

    pub fn context(&self, s: &SpatioTemporalState) -> [f64; CONTEXT_LEN] {
        self.norm.apply(&s.context)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// One output per menu action.
    Q,
    /// Scalar state value.
    V,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Q => NUM_ACTIONS,
            Head::V => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub head: Head,
    pub table_rows: usize,
    pub embedding_dim: usize,
    pub hidden: [usize; 2],
}

/// Parameter groups in flat-view order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Embedding,
    W1,
    B1,
    W2,
    B2,
    W3,
    B3,
}

impl Group {
    pub const ALL: [Group; 7] = [Group::Embedding, Group::W1, Group::B1, Group::W2, Group::B2, Group::W3, Group::B3];

    pub fn name(self) -> &'static str {
        match self {
            Group::Embedding => "embedding",
            Group::W1 => "w1",
            Group::B1 => "b1",
            Group::W2 => "w2",
            Group::B2 => "b2",
            Group::W3 => "w3",
            Group::B3 => "b3",
        }
    }
}

impl ModelShape {
    pub fn input_dim(&self) -> usize {
        self.embedding_dim + CONTEXT_LEN
    }

    pub fn outputs(&self) -> usize {
        self.head.outputs()
    }

    pub fn group_len(&self, g: Group) -> usize {
        let [h1, h2] = self.hidden;
        match g {
            Group::Embedding => self.table_rows * self.embedding_dim,
            Group::W1 => h1 * self.input_dim(),
            Group::B1 => h1,
            Group::W2 => h2 * h1,
            Group::B2 => h2,
            Group::W3 => self.outputs() * h2,
            Group::B3 => self.outputs(),
        }
    }

    pub fn num_params(&self) -> usize {
        Group::ALL.iter().map(|&g| self.group_len(g)).sum()
    }
}

/// Dense weights are row-major `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueModel {
    pub shape: ModelShape,
    pub embedding: EmbeddingTable,
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
    pub w3: Vec<f32>,
    pub b3: Vec<f32>,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Clone, Debug, Default)]
pub struct Activations {
    pub x: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: Vec<f64>,
}

/// Gradient of some loss. Embedding rows are sparse.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub embedding: BTreeMap<u32, Vec<f64>>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl Grads {
    pub fn zeros(shape: &ModelShape) -> Grads {
        Grads {
            embedding: BTreeMap::new(),
            w1: vec![0.0; shape.group_len(Group::W1)],
            b1: vec![0.0; shape.group_len(Group::B1)],
            w2: vec![0.0; shape.group_len(Group::W2)],
            b2: vec![0.0; shape.group_len(Group::B2)],
            w3: vec![0.0; shape.group_len(Group::W3)],
            b3: vec![0.0; shape.group_len(Group::B3)],
        }
    }

    pub fn clear(&mut self) {
        self.embedding.clear();
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3, &mut self.b3] {
            v.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Dense copy of one group; used by gradient checks on small models.
    pub fn group(&self, shape: &ModelShape, g: Group) -> Vec<f64> {
        match g {
            Group::Embedding => {
                let mut out = vec![0.0; shape.group_len(g)];
                for (&row, v) in &self.embedding {
                    let start = row as usize * shape.embedding_dim;
                    out[start..start + v.len()].copy_from_slice(v);
                }
                out
            }
            Group::W1 => self.w1.clone(),
            Group::B1 => self.b1.clone(),
            Group::W2 => self.w2.clone(),
            Group::B2 => self.b2.clone(),
            Group::W3 => self.w3.clone(),
            Group::B3 => self.b3.clone(),
        }
    }
}

fn relu(v: f64) -> f64 {
    // keeps NaN so that bad parameters surface in the output
    if v < 0.0 {
        0.0
    } else {
        v
    }
}

fn dense(w: &[f32], b: &[f32], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let n = x.len();
    for (row, &bias) in w.chunks_exact(n).zip(b) {
        let mut acc = bias as f64;
        for (wi, xi) in row.iter().zip(x) {
            acc += *wi as f64 * xi;
        }
        out.push(acc);
    }
}

impl ValueModel {
    pub fn zeros(shape: ModelShape) -> ValueModel {
        let len = |g| vec![0.0f32; shape.group_len(g)];
        ValueModel {
            embedding: EmbeddingTable::zeros(shape.table_rows, shape.embedding_dim),
            w1: len(Group::W1),
            b1: len(Group::B1),
            w2: len(Group::W2),
            b2: len(Group::B2),
            w3: len(Group::W3),
            b3: len(Group::B3),
            shape,
        }
    }

    /// Embeddings uniform in `[-0.01, 0.01]`, weights uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    pub fn init<R: Rng>(shape: ModelShape, rng: &mut R) -> ValueModel {
        let mut m = ValueModel::zeros(shape);
        for v in &mut m.embedding.data {
            *v = rng.random_range(-EMBEDDING_INIT..=EMBEDDING_INIT) as f32;
        }
        let [h1, h2] = m.shape.hidden;
        for (w, fan_in) in [(&mut m.w1, m.shape.input_dim()), (&mut m.w2, h1), (&mut m.w3, h2)] {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..=bound) as f32;
            }
        }
        m
    }

    pub fn group(&self, g: Group) -> &[f32] {
        match g {
            Group::Embedding => &self.embedding.data,
            Group::W1 => &self.w1,
            Group::B1 => &self.b1,
            Group::W2 => &self.w2,
            Group::B2 => &self.b2,
            Group::W3 => &self.w3,
            Group::B3 => &self.b3,
        }
    }

    pub fn group_mut(&mut self, g: Group) -> &mut [f32] {
        match g {
            Group::Embedding => &mut self.embedding.data,
            Group::W1 => &mut self.w1,
            Group::B1 => &mut self.b1,
            Group::W2 => &mut self.w2,
            Group::B2 => &mut self.b2,
            Group::W3 => &mut self.w3,
            Group::B3 => &mut self.b3,
        }
    }

    /// All parameters in group order.
    pub fn params(&self) -> impl Iterator<Item = f32> + '_ {
        Group::ALL.into_iter().flat_map(|g| self.group(g).iter().copied())
    }

    /// Overwrites all parameters from a flat slice in group order.
    pub fn set_params(&mut self, flat: &[f32]) -> Result<(), ModelError> {
        if flat.len() != self.shape.num_params() {
            return Err(ModelError::Shape(format!(
                "{} parameters for a model of {}",
                flat.len(),
                self.shape.num_params()
            )));
        }
        let mut rest = flat;
        for g in Group::ALL {
            let dst = self.group_mut(g);
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Full scan; forward passes only see the rows they touch.
    pub fn validate(&self) -> Result<(), ModelError> {
        for g in Group::ALL {
            if let Some(i) = self.group(g).iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(format!("parameter {}[{i}]", g.name())));
            }
        }
        Ok(())
    }

    /// Forward pass into `act`. `context` must already be normalized.
    pub fn forward_into(
        &self,
        tiles: &[u32],
        context: &[f64; CONTEXT_LEN],
        act: &mut Activations,
    ) -> Result<(), ModelError> {
        let dim = self.shape.embedding_dim;
        act.x.clear();
        act.x.resize(dim, 0.0);
        for &t in tiles {
            let row = self.embedding.data.get(t as usize * dim..(t as usize + 1) * dim);
            let row = row.ok_or_else(|| {
                ModelError::Shape(format!("tile {t} outside a table of {} rows", self.shape.table_rows))
            })?;
            for (x, w) in act.x.iter_mut().zip(row) {
                *x += *w as f64;
            }
        }
        act.x.extend_from_slice(context);
        dense(&self.w1, &self.b1, &act.x, &mut act.h1);
        act.h1.iter_mut().for_each(|v| *v = relu(*v));
        dense(&self.w2, &self.b2, &act.h1, &mut act.h2);
        act.h2.iter_mut().for_each(|v| *v = relu(*v));
        dense(&self.w3, &self.b3, &act.h2, &mut act.out);
        if act.out.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("output; parameters or inputs are not finite".into()));
        }
        Ok(())
    }

    pub fn forward(&self, tiles: &[u32], context: &[f64; CONTEXT_LEN]) -> Result<Vec<f64>, ModelError> {
        let mut act = Activations::default();
        self.forward_into(tiles, context, &mut act)?;
        Ok(act.out)
    }

    /// Adds the gradient of a loss with output gradient `d_out` to `grads`.
    pub fn backward(&self, tiles: &[u32], act: &Activations, d_out: &[f64], grads: &mut Grads) {
        let [h1n, h2n] = self.shape.hidden;
        let n_in = self.shape.input_dim();

        let mut d_h2 = vec![0.0; h2n];
        for (k, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.b3[k] += g;
            let w = &self.w3[k * h2n..(k + 1) * h2n];
            let gw = &mut grads.w3[k * h2n..(k + 1) * h2n];
            for j in 0..h2n {
                gw[j] += g * act.h2[j];
                d_h2[j] += g * w[j] as f64;
            }
        }

        let mut d_h1 = vec![0.0; h1n];
        for j in 0..h2n {
            if act.h2[j] <= 0.0 || d_h2[j] == 0.0 {
                continue;
            }
            let g = d_h2[j];
            grads.b2[j] += g;
            let w = &self.w2[j * h1n..(j + 1) * h1n];
            let gw = &mut grads.w2[j * h1n..(j + 1) * h1n];
            for i in 0..h1n {
                gw[i] += g * act.h1[i];
                d_h1[i] += g * w[i] as f64;
            }
        }

        let mut d_x = vec![0.0; n_in];
        for i in 0..h1n {
            if act.h1[i] <= 0.0 || d_h1[i] == 0.0 {
                continue;
            }
            let g = d_h1[i];
            grads.b1[i] += g;
            let w = &self.w1[i * n_in..(i + 1) * n_in];
            let gw = &mut grads.w1[i * n_in..(i + 1) * n_in];
            for m in 0..n_in {
                gw[m] += g * act.x[m];
                d_x[m] += g * w[m] as f64;
            }
        }

        let dim = self.shape.embedding_dim;
        for &t in tiles {
            let row = grads.embedding.entry(t).or_insert_with(|| vec![0.0; dim]);
            for (r, d) in row.iter_mut().zip(&d_x[..dim]) {
                *r += d;
            }
        }
    }

    /// `p -= lr * g` for every parameter.
    pub fn apply(&mut self, grads: &Grads, lr: f64) {
        let step = |p: &mut [f32], g: &[f64]| {
            for (p, g) in p.iter_mut().zip(g) {
                *p = (*p as f64 - lr * g) as f32;
            }
        };
        step(&mut self.w1, &grads.w1);
        step(&mut self.b1, &grads.b1);
        step(&mut self.w2, &grads.w2);
        step(&mut self.b2, &grads.b2);
        step(&mut self.w3, &grads.w3);
        step(&mut self.b3, &grads.b3);
        for (&row, g) in &grads.embedding {
            step(self.embedding.row_mut(row as usize), g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(head: Head, hidden: [usize; 2]) -> ModelShape {
        ModelShape { head, table_rows: 8, embedding_dim: 3, hidden }
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = ValueModel::zeros(shape(Head::Q, [4, 3]));
        let out = m.forward(&[1, 2, 2], &[0.3, -1.0, 2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0; NUM_ACTIONS]);
    }

    #[test]
    fn one_unit_net_by_hand() {
        // x = e[1] + e[3] ++ ctx; h1 = relu(2*x0 + 1*c0 - 0.5); h2 = relu(3*h1 + 0.25); out = -2*h2 + 1
        let mut m = ValueModel::zeros(ModelShape { head: Head::V, table_rows: 4, embedding_dim: 1, hidden: [1, 1] });
        m.embedding.data = vec![0.0, 0.5, 9.0, 0.25];
        m.w1 = vec![2.0, 1.0, 0.0, 0.0, 0.0];
        m.b1 = vec![-0.5];
        m.w2 = vec![3.0];
        m.b2 = vec![0.25];
        m.w3 = vec![-2.0];
        m.b3 = vec![1.0];
        let out = m.forward(&[1, 3], &[0.5, 7.0, 7.0, 7.0]).unwrap();
        // x0 = 0.75, h1 = 1.5 + 0.5 - 0.5 = 1.5, h2 = 4.75, out = -8.5
        assert_eq!(out, vec![-8.5]);
    }

    #[test]
    fn forward_is_pure() {
        let m = ValueModel::init(shape(Head::Q, [5, 4]), &mut ChaCha8Rng::seed_from_u64(1));
        let ctx = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(m.forward(&[0, 7], &ctx).unwrap(), m.forward(&[0, 7], &ctx).unwrap());
    }

    #[test]
    fn non_finite_parameter_is_an_error() {
        let mut m = ValueModel::init(shape(Head::V, [5, 4]), &mut ChaCha8Rng::seed_from_u64(1));
        m.w2[3] = f32::NAN;
        assert!(m.validate().is_err());
        assert!(matches!(m.forward(&[0], &[0.0; 4]), Err(ModelError::NonFinite(_))));
    }

    #[test]
    fn flat_view_round_trips() {
        let m = ValueModel::init(shape(Head::Q, [5, 4]), &mut ChaCha8Rng::seed_from_u64(3));
        let flat: Vec<f32> = m.params().collect();
        assert_eq!(flat.len(), m.shape.num_params());
        let mut z = ValueModel::zeros(m.shape.clone());
        z.set_params(&flat).unwrap();
        assert_eq!(z, m);
        assert!(z.set_params(&flat[1..]).is_err());
    }

    #[test]
    fn linear_gradient_closed_form() {
        // out = w * c0 with everything else zero; loss (w x - y)^2 has dL/dw = 2 (w x - y) x
        let mut m = ValueModel::zeros(ModelShape { head: Head::V, table_rows: 1, embedding_dim: 1, hidden: [1, 1] });
        let (w, x, y) = (0.5f32, 2.0, 3.0);
        m.w1 = vec![0.0, 1.0, 0.0, 0.0, 0.0];
        m.w2 = vec![1.0];
        m.w3 = vec![w];
        let mut act = Activations::default();
        m.forward_into(&[], &[x, 0.0, 0.0, 0.0], &mut act).unwrap();
        let mut g = Grads::zeros(&m.shape);
        m.backward(&[], &act, &[2.0 * (act.out[0] - y)], &mut g);
        assert_eq!(g.w3[0], 2.0 * (w as f64 * x - y) * x);
    }
}
