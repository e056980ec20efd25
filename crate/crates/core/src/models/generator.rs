use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normal_tensor, Linear, BRANCH_INIT_STD, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::tensor::{Element, ParamStore, Tape, Tensor, Var};

/// Shape of a TreeGCN generator.
///
/// Layer `l` grows every node into `branching[l]` children and maps features
/// to `widths[l]`; the root holds the concatenated latent and label embeds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    /// 0 for an unconditioned generator.
    pub label_dim: usize,
    pub latent_embed: usize,
    pub label_embed: usize,
    pub widths: Vec<usize>,
    pub branching: Vec<usize>,
    /// Length of the loop-term support chain.
    pub support: usize,
}

impl GeneratorConfig {
    /// 256 points, quartered widths.
    pub fn desk(label_dim: usize) -> Self {
        GeneratorConfig {
            latent_dim: 32,
            label_dim,
            latent_embed: 24,
            label_embed: 8,
            widths: vec![64, 64, 64, 32, 32, 3],
            branching: vec![1, 2, 2, 2, 2, 16],
            support: 3,
        }
    }

    /// 2048 points as in the original TreeGCN backbone.
    pub fn full(label_dim: usize) -> Self {
        GeneratorConfig {
            latent_dim: 96,
            label_dim,
            latent_embed: 64,
            label_embed: 32,
            widths: vec![256, 256, 256, 128, 128, 128, 3],
            branching: vec![1, 2, 2, 2, 2, 2, 64],
            support: 10,
        }
    }

    /// Drops the label input; the latent embed takes over the label's width
    /// so the tree itself is unchanged.
    pub fn unconditioned(mut self) -> Self {
        if self.label_dim > 0 {
            self.latent_embed += self.label_embed;
        }
        self.label_dim = 0;
        self.label_embed = 0;
        self
    }

    pub fn is_conditional(&self) -> bool {
        self.label_dim > 0
    }

    pub fn root_width(&self) -> usize {
        self.latent_embed + self.label_embed
    }

    pub fn num_points(&self) -> usize {
        self.branching.iter().product()
    }

    /// Nodes per sample at each depth, root first.
    pub fn nodes_per_depth(&self) -> Vec<usize> {
        let mut out = vec![1];
        for &b in &self.branching {
            out.push(out.last().expect("nonempty") * b);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("generator config: {msg}")));
        if self.latent_dim == 0 || self.latent_embed == 0 || self.support == 0 {
            return bad("latent_dim, latent_embed and support must be positive".into());
        }
        if self.is_conditional() != (self.label_embed > 0) {
            return bad("label_embed must be positive exactly when label_dim is".into());
        }
        if self.widths.is_empty() || self.widths.len() != self.branching.len() {
            return bad(format!(
                "{} widths for {} branching factors",
                self.widths.len(),
                self.branching.len()
            ));
        }
        if self.widths.contains(&0) || self.branching.contains(&0) {
            return bad("widths and branching factors must be positive".into());
        }
        if *self.widths.last().expect("nonempty") != 3 {
            return bad("last width must be 3 (xyz)".into());
        }
        Ok(())
    }
}

/// Parameter indices of one tree layer.
#[derive(Clone, Debug)]
pub struct TreeLayer {
    pub depth: usize,
    pub branching: usize,
    pub in_width: usize,
    pub out_width: usize,
    /// `[children, in_width]`, added to the replicated parent features.
    pub branch: usize,
    /// `in -> in*support -> out`, no bias.
    pub loop_in: usize,
    pub loop_out: usize,
    /// One `[F_a, out_width]` map per ancestor depth `a = 0..=depth`.
    pub ancestors: Vec<usize>,
    pub bias: usize,
    pub activate: bool,
}

impl TreeLayer {
    /// Children of `parent` (`[B * nodes, in_width]`): each row repeated
    /// `branching` times plus its per-child embedding.
    pub fn branch<'t, T: Element>(&self, p: &[Var<'t, T>], parent: &Var<'t, T>, batch: usize) -> Result<Var<'t, T>> {
        let children = parent.repeat_rows(self.branching)?;
        let per_sample = p[self.branch].shape()[0];
        children
            .reshape([batch, per_sample, self.in_width])?
            .add(&p[self.branch])?
            .reshape([batch * per_sample, self.in_width])
    }

    /// Output features of this layer given the features at every depth so
    /// far (`tree[a]` is `[B * nodes_a, F_a]`, the last entry is the parent).
    pub fn forward<'t, T: Element>(&self, p: &[Var<'t, T>], tree: &[Var<'t, T>], batch: usize) -> Result<Var<'t, T>> {
        if tree.len() != self.depth + 1 || self.ancestors.len() != tree.len() {
            return Err(Error::InvalidArgument(format!(
                "tree layer at depth {} got {} levels",
                self.depth,
                tree.len()
            )));
        }
        let parent = tree[self.depth];
        let parent_rows = parent.shape()[0];
        let child = self.branch(p, &parent, batch)?;
        let looped = child.matmul(&p[self.loop_in])?.matmul(&p[self.loop_out])?;

        // ancestor terms are computed at their own depth and replicated down
        let mut anc: Option<Var<'t, T>> = None;
        for (a, level) in tree.iter().enumerate() {
            let rows = level.shape()[0];
            if rows == 0 || !parent_rows.is_multiple_of(rows) {
                return Err(Error::InvalidArgument("inconsistent tree bookkeeping".into()));
            }
            let term = level.matmul(&p[self.ancestors[a]])?.repeat_rows(parent_rows / rows)?;
            anc = Some(match anc {
                Some(acc) => acc.add(&term)?,
                None => term,
            });
        }
        let anc = anc.expect("at least the parent").repeat_rows(self.branching)?;
        let out = looped.add(&anc)?.add(&p[self.bias])?;
        Ok(if self.activate {
            out.leaky_relu(T::from_f64(LEAKY_SLOPE))
        } else {
            out
        })
    }
}

/// Latent (and label) embeds feeding a stack of tree graph convolutions.
#[derive(Clone, Debug)]
pub struct TreeGcnGenerator<T: Element = f32> {
    pub config: GeneratorConfig,
    pub params: ParamStore<T>,
    latent: Linear,
    label: Option<Linear>,
    pub layers: Vec<TreeLayer>,
}

impl<T: Element> TreeGcnGenerator<T> {
    /// Xavier-uniform weights, zero biases, branch embeddings `N(0, 0.01^2)`.
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let latent = Linear::new(&mut params, &mut rng, "g.latent", config.latent_dim, config.latent_embed, true);
        let label = config
            .is_conditional()
            .then(|| Linear::new(&mut params, &mut rng, "g.label", config.label_dim, config.label_embed, true));

        let nodes = config.nodes_per_depth();
        let mut in_widths = vec![config.root_width()];
        let mut layers = Vec::with_capacity(config.widths.len());
        for (l, (&out_width, &b)) in config.widths.iter().zip(&config.branching).enumerate() {
            let in_width = in_widths[l];
            let name = format!("g.tree.{l}");
            let branch = params.add(
                format!("{name}.branch"),
                normal_tensor([nodes[l + 1], in_width], BRANCH_INIT_STD, &mut rng),
            );
            let hidden = in_width * config.support;
            let loop_in = Linear::new(&mut params, &mut rng, &format!("{name}.loop.0"), in_width, hidden, false).weight;
            let loop_out = Linear::new(&mut params, &mut rng, &format!("{name}.loop.1"), hidden, out_width, false).weight;
            let ancestors = (0..=l)
                .map(|a| {
                    Linear::new(&mut params, &mut rng, &format!("{name}.anc.{a}"), in_widths[a], out_width, false).weight
                })
                .collect();
            let bias = params.add(format!("{name}.bias"), Tensor::zeros([out_width]));
            layers.push(TreeLayer {
                depth: l,
                branching: b,
                in_width,
                out_width,
                branch,
                loop_in,
                loop_out,
                ancestors,
                bias,
                // the coordinate layer stays linear
                activate: l + 1 < config.widths.len(),
            });
            in_widths.push(out_width);
        }
        Ok(TreeGcnGenerator {
            config,
            params,
            latent,
            label,
            layers,
        })
    }

    /// `z: [B, latent_dim]`, `y: [B, label_dim]` (None when unconditioned)
    /// to points `[B * N, 3]`, sample-major.
    pub fn forward<'t>(&self, p: &[Var<'t, T>], z: &Var<'t, T>, y: Option<&Var<'t, T>>) -> Result<Var<'t, T>> {
        let zs = z.shape();
        if zs.len() != 2 || zs[1] != self.config.latent_dim {
            return Err(Error::Dimension {
                op: "generator latent",
                lhs: zs,
                rhs: vec![0, self.config.latent_dim],
            });
        }
        let batch = zs[0];
        let ze = self.latent.forward(p, z)?;
        let root = match (&self.label, y) {
            (Some(lin), Some(y)) => {
                let ys = y.shape();
                if ys != [batch, self.config.label_dim] {
                    return Err(Error::Dimension {
                        op: "generator label",
                        lhs: ys,
                        rhs: vec![batch, self.config.label_dim],
                    });
                }
                Var::concat_cols(&[ze, lin.forward(p, y)?])?
            }
            (None, None) => ze,
            (Some(_), None) => return Err(Error::InvalidArgument("conditional generator needs a label".into())),
            (None, Some(_)) => return Err(Error::InvalidArgument("unconditioned generator takes no label".into())),
        };
        let mut tree = vec![root];
        for layer in &self.layers {
            let next = layer.forward(p, &tree, batch)?;
            tree.push(next);
        }
        Ok(tree.pop().expect("at least one layer"))
    }

    /// Plain-tensor convenience: `[B * N, 3]` points for the given inputs.
    pub fn generate(&self, z: &Tensor<T>, y: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let p = self.params.bind(&tape);
        let z = tape.var(z.clone());
        let y = y.map(|y| tape.var(y.clone()));
        let out = self.forward(&p, &z, y.as_ref())?;
        let value = out.value();
        Ok((*value).clone())
    }
}
