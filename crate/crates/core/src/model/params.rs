use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelKind};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

const POS_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    /// He-uniform over `fan_in`.
    He(usize),
    /// Xavier-uniform scaled by the factor.
    Xavier(usize, usize, f64),
    Normal(f64),
}

struct Slot {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn layout(cfg: &ModelConfig) -> Vec<Slot> {
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push(Slot { name, shape, init });
    let mut c_in = 1;
    for (i, &c) in cfg.stem_channels.iter().enumerate() {
        push(format!("stem.{i}.weight"), vec![c, c_in, 2, 2, 2], Init::He(c_in * 8));
        push(format!("stem.{i}.bias"), vec![c], Init::Zeros);
        c_in = c;
    }
    let linear = |push: &mut dyn FnMut(String, Vec<usize>, Init), name: &str, i: usize, o: usize, s: f64| {
        push(format!("{name}.weight"), vec![i, o], Init::Xavier(i, o, s));
        push(format!("{name}.bias"), vec![o], Init::Zeros);
    };
    if cfg.kind == ModelKind::BeyondCt {
        let d = cfg.embed_dim;
        linear(&mut push, "patch_embed", cfg.patch_len(), d, 1.0);
        if cfg.use_demographics {
            linear(&mut push, "demo_embed", cfg.demographics_features(), d, 1.0);
        }
        push("pos_embed".into(), vec![cfg.seq_len(), d], Init::Normal(POS_INIT_STD));
        let hidden = cfg.mlp_ratio * d;
        for b in 0..cfg.blocks {
            let p = format!("blocks.{b}");
            push(format!("{p}.ln1.gain"), vec![d], Init::Ones);
            push(format!("{p}.ln1.shift"), vec![d], Init::Zeros);
            for w in ["w_q", "w_k", "w_v", "w_o"] {
                push(format!("{p}.attn.{w}"), vec![d, d], Init::Xavier(d, d, 1.0));
            }
            push(format!("{p}.ln2.gain"), vec![d], Init::Ones);
            push(format!("{p}.ln2.shift"), vec![d], Init::Zeros);
            linear(&mut push, &format!("{p}.mlp.fc1"), d, hidden, 1.0);
            linear(&mut push, &format!("{p}.mlp.fc2"), hidden, d, 1.0);
        }
    }
    let [h1, h2] = cfg.head_hidden;
    linear(&mut push, "head.fc1", cfg.pooled_dim(), h1, 1.0);
    linear(&mut push, "head.fc2", h1, h2, 1.0);
    linear(&mut push, "head.fc3", h2, 1, 1.0);
    out
}

/// Named parameter tensors in a fixed, config-determined order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    lookup: HashMap<String, usize>,
}

impl<T: Real> ModelParams<T> {
    /// Seeded initialization. Values are drawn in f64 and then cast, so the
    /// f32 and f64 parameter sets agree up to rounding.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots = layout(config);
        let mut names = Vec::with_capacity(slots.len());
        let mut tensors = Vec::with_capacity(slots.len());
        for s in slots {
            let t: Tensor<f64> = match s.init {
                Init::Zeros => Tensor::zeros(&s.shape),
                Init::Ones => Tensor::ones(&s.shape),
                Init::He(fan_in) => Tensor::uniform(&s.shape, (6.0 / fan_in as f64).sqrt(), &mut rng),
                Init::Xavier(i, o, k) => {
                    Tensor::uniform(&s.shape, k * (6.0 / (i + o) as f64).sqrt(), &mut rng)
                }
                Init::Normal(std) => Tensor::randn(&s.shape, std, &mut rng),
            };
            names.push(s.name);
            tensors.push(t.cast());
        }
        Ok(Self::assemble(config.clone(), names, tensors))
    }

    /// All-zero parameters of the right shapes.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (names, tensors) = layout(config)
            .into_iter()
            .map(|s| (s.name, Tensor::zeros(&s.shape)))
            .unzip();
        Ok(Self::assemble(config.clone(), names, tensors))
    }

    /// Rebuilds from named tensors, checking names and shapes against the
    /// layout the config implies.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let slots = layout(config);
        if slots.len() != named.len() {
            return Err(dim_err!(
                "config expects {} parameter tensors, got {}",
                slots.len(),
                named.len()
            ));
        }
        let mut names = Vec::with_capacity(slots.len());
        let mut tensors = Vec::with_capacity(slots.len());
        for (slot, (name, t)) in slots.into_iter().zip(named) {
            if slot.name != name {
                return Err(dim_err!("expected tensor {:?}, found {name:?}", slot.name));
            }
            if slot.shape != t.shape() {
                return Err(dim_err!(
                    "tensor {name}: expected shape {:?}, found {:?}",
                    slot.shape,
                    t.shape()
                ));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("tensor {name} has non-finite entries")));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self::assemble(config.clone(), names, tensors))
    }

    fn assemble(config: ModelConfig, names: Vec<String>, tensors: Vec<Tensor<T>>) -> Self {
        let lookup = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        Self {
            config,
            names,
            tensors,
            lookup,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.lookup.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.lookup.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams::assemble(
            self.config.clone(),
            self.names.clone(),
            self.tensors.iter().map(Tensor::cast).collect(),
        )
    }

    /// Registers every tensor as a trainable leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> ModelVars {
        let vars: Vec<Var> = self.tensors.iter().map(|t| tape.param(t.clone())).collect();
        ModelVars::bind(&self.config, &vars).expect("layout matches own config")
    }
}

/// Parameter count implied by a config, without allocating.
pub(crate) fn layout_param_count(cfg: &ModelConfig) -> usize {
    layout(cfg).iter().map(|s| s.shape.iter().product::<usize>()).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub heads: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub ln1_gain: Var,
    pub ln1_shift: Var,
    pub attn: AttentionVars,
    pub ln2_gain: Var,
    pub ln2_shift: Var,
    pub fc1: LinearVars,
    pub fc2: LinearVars,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub fc1: LinearVars,
    pub fc2: LinearVars,
    pub fc3: LinearVars,
}

/// Tape handles for a registered parameter set.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub stem: Vec<ConvVars>,
    pub patch_embed: Option<LinearVars>,
    pub demo_embed: Option<LinearVars>,
    pub pos_embed: Option<Var>,
    pub blocks: Vec<BlockVars>,
    pub head: HeadVars,
    /// Every handle in layout order.
    pub all: Vec<Var>,
}

impl ModelVars {
    /// Binds handles given in layout order (as from [`ModelParams::register`]
    /// or a gradient-check closure).
    pub fn bind(cfg: &ModelConfig, vars: &[Var]) -> Result<Self> {
        let slots = layout(cfg);
        if slots.len() != vars.len() {
            return Err(dim_err!(
                "config expects {} parameter handles, got {}",
                slots.len(),
                vars.len()
            ));
        }
        let map: HashMap<&str, Var> = slots
            .iter()
            .zip(vars)
            .map(|(s, &v)| (s.name.as_str(), v))
            .collect();
        let get = |n: &str| map[n];
        let lin = |n: &str| LinearVars {
            weight: get(&format!("{n}.weight")),
            bias: get(&format!("{n}.bias")),
        };
        let stem = (0..cfg.stem_channels.len())
            .map(|i| ConvVars {
                weight: get(&format!("stem.{i}.weight")),
                bias: get(&format!("stem.{i}.bias")),
            })
            .collect();
        let beyond = cfg.kind == ModelKind::BeyondCt;
        let blocks = if beyond {
            (0..cfg.blocks)
                .map(|b| {
                    let p = format!("blocks.{b}");
                    BlockVars {
                        ln1_gain: get(&format!("{p}.ln1.gain")),
                        ln1_shift: get(&format!("{p}.ln1.shift")),
                        attn: AttentionVars {
                            w_q: get(&format!("{p}.attn.w_q")),
                            w_k: get(&format!("{p}.attn.w_k")),
                            w_v: get(&format!("{p}.attn.w_v")),
                            w_o: get(&format!("{p}.attn.w_o")),
                            heads: cfg.heads,
                        },
                        ln2_gain: get(&format!("{p}.ln2.gain")),
                        ln2_shift: get(&format!("{p}.ln2.shift")),
                        fc1: lin(&format!("{p}.mlp.fc1")),
                        fc2: lin(&format!("{p}.mlp.fc2")),
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            stem,
            patch_embed: beyond.then(|| lin("patch_embed")),
            demo_embed: (beyond && cfg.use_demographics).then(|| lin("demo_embed")),
            pos_embed: beyond.then(|| get("pos_embed")),
            blocks,
            head: HeadVars {
                fc1: lin("head.fc1"),
                fc2: lin("head.fc2"),
                fc3: lin("head.fc3"),
            },
            all: vars.to_vec(),
        })
    }
}

impl ModelConfig {
    pub fn param_count(&self) -> usize {
        layout_param_count(self)
    }
}
