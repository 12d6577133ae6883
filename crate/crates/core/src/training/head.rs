use rand::Rng;

use crate::backbone::Seq;
use crate::error::{Error, Result};
use crate::params::{Group, Linear, ParamStore, Session};
use crate::prompting::HeadInput;
use crate::tensor::{Scalar, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadConfig {
    /// `None` uses the token width.
    pub hidden_width: Option<usize>,
    pub hidden_layers: usize,
    pub classes: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden_width: None,
            hidden_layers: 1,
            classes: 8,
        }
    }
}

impl HeadConfig {
    /// Head of the 22M-parameter reference models: two hidden layers of 256
    /// and 15 classes.
    pub fn paper() -> Self {
        Self {
            hidden_width: Some(256),
            hidden_layers: 2,
            classes: 15,
        }
    }
}

/// MLP over the concatenated head inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub inputs: Vec<HeadInput>,
    pub layers: Vec<Linear>,
}

impl Head {
    pub fn new<T: Scalar>(
        cfg: &HeadConfig,
        width: usize,
        inputs: &[HeadInput],
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Config("head needs at least one input".into()));
        }
        if cfg.classes < 1 {
            return Err(Error::Config("head needs at least one class".into()));
        }
        let hidden = cfg.hidden_width.unwrap_or(width);
        let mut fan_in = inputs.len() * width;
        let mut layers = Vec::with_capacity(cfg.hidden_layers + 1);
        for i in 1..=cfg.hidden_layers {
            layers.push(Linear::new(store, rng, &format!("head.fc{i}"), fan_in, hidden, Group::Head));
            fan_in = hidden;
        }
        layers.push(Linear::new(store, rng, &format!("head.fc{}", cfg.hidden_layers + 1), fan_in, cfg.classes, Group::Head));
        Ok(Self {
            inputs: inputs.to_vec(),
            layers,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    /// `[1, |inputs|·d]` feature row: CLS, max-pooled prompts, max-pooled patches.
    pub fn features<T: Scalar>(&self, s: &mut Session<'_, T>, seq: &Seq) -> Result<Var> {
        let d = s.g.shape(seq.var)[1];
        let mut parts = Vec::with_capacity(self.inputs.len());
        for input in &self.inputs {
            let part = match input {
                HeadInput::Cls => s.g.slice(seq.var, 0, 0, 1)?,
                HeadInput::Prompt => {
                    let p = seq.prompt_count();
                    if p == 0 {
                        return Err(Error::MissingComponent("prompt"));
                    }
                    pool_rows(s, seq.var, 1, 1 + p, d)?
                }
                HeadInput::PatchMaxpool => {
                    let r = seq.patch_range();
                    if r.is_empty() {
                        return Err(Error::MissingComponent("patch_maxpool"));
                    }
                    pool_rows(s, seq.var, r.start, r.end, d)?
                }
            };
            parts.push(part);
        }
        Ok(if parts.len() == 1 { parts[0] } else { s.g.concat(&parts, 1)? })
    }

    /// Logits `[1, C]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, seq: &Seq) -> Result<Var> {
        let mut x = self.features(s, seq)?;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(s, x)?;
            if i < last {
                x = s.g.gelu(x)?;
            }
        }
        Ok(x)
    }
}

fn pool_rows<T: Scalar>(s: &mut Session<'_, T>, x: Var, start: usize, end: usize, d: usize) -> Result<Var> {
    let rows = s.g.slice(x, 0, start, end)?;
    let pooled = s.g.max_reduce(rows, 0)?;
    Ok(s.g.reshape(pooled, vec![1, d])?)
}
