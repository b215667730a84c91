use std::collections::HashMap;
use std::fmt;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

/// Parameter groups of the joint model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// Feature encoder and subword decoder.
    Asr,
    /// Word-piece embedding and self-attention layer.
    NluEncoder,
    IcHead,
    SlHead,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Asr, Block::NluEncoder, Block::IcHead, Block::SlHead];
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Asr => "asr",
            Block::NluEncoder => "nlu_encoder",
            Block::IcHead => "ic_head",
            Block::SlHead => "sl_head",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub block: Block,
    pub value: Matrix,
}

/// Named parameter matrices. Order is fixed at construction and is the
/// index space used by gradients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, p) in params.iter().enumerate() {
            if p.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    tensor: p.name.clone(),
                    message: "non-finite parameter".into(),
                });
            }
            if index.insert(p.name.clone(), i).is_some() {
                return Err(Error::Input(format!("duplicate parameter `{}`", p.name)));
            }
        }
        Ok(ModelParams { params, index })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Matrix {
        &mut self.params[i].value
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix> {
        self.id(name).map(|i| &self.params[i].value)
    }

    pub fn block_ids(&self, block: Block) -> impl Iterator<Item = usize> + '_ {
        (0..self.params.len()).filter(move |&i| self.params[i].block == block)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub(crate) fn into_vec(self) -> Vec<Param> {
        self.params
    }
}

/// Gradients aligned with a [`ModelParams`] index space.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Matrix>,
    blocks: Vec<Block>,
}

impl Gradients {
    pub(crate) fn from_tape(raw: Vec<Option<Matrix>>, params: &ModelParams) -> Self {
        let grads = raw
            .into_iter()
            .zip(params.iter())
            .map(|(g, p)| g.unwrap_or_else(|| Array2::zeros(p.value.dim())))
            .collect();
        Gradients {
            grads,
            blocks: params.iter().map(|p| p.block).collect(),
        }
    }

    pub fn block_norm(&self, block: Block) -> f64 {
        self.grads
            .iter()
            .zip(&self.blocks)
            .filter(|(_, b)| **b == block)
            .flat_map(|(g, _)| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// True if every entry of every matrix in `block` is exactly zero.
    pub fn block_is_zero(&self, block: Block) -> bool {
        self.grads
            .iter()
            .zip(&self.blocks)
            .filter(|(_, b)| **b == block)
            .all(|(g, _)| g.iter().all(|&v| v == 0.0))
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub(crate) fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Glorot-uniform weights.
    pub(crate) fn glorot(&mut self, rows: usize, cols: usize) -> Matrix {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Array2::from_shape_simple_fn((rows, cols), || self.rng.gen_range(-a..a))
    }

    pub(crate) fn uniform(&mut self, rows: usize, cols: usize, a: f64) -> Matrix {
        Array2::from_shape_simple_fn((rows, cols), || self.rng.gen_range(-a..a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_nan() {
        let p = |name: &str, v: f64| Param {
            name: name.into(),
            block: Block::Asr,
            value: Array2::from_elem((1, 1), v),
        };
        assert!(ModelParams::new(vec![p("a", 0.0), p("a", 1.0)]).is_err());
        assert!(matches!(
            ModelParams::new(vec![p("a", f64::NAN)]),
            Err(Error::Numeric { .. })
        ));
    }
}
