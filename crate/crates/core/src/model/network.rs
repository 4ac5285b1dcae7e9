use hiertag_tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::{Init, ParamStore};
use crate::corpus::{BatchedDocument, Label};
use crate::error::{contract, Result};

#[derive(Debug, Clone)]
struct Linear {
    weight: usize,
    bias: Option<usize>,
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    attention_norm: Norm,
    ff_in: Linear,
    ff_out: Linear,
    ff_norm: Norm,
}

#[derive(Debug, Clone)]
struct GruDirection {
    input: Linear,
    gates: usize,
    candidate: usize,
}

#[derive(Debug, Clone)]
struct BiGru {
    forward: GruDirection,
    backward: GruDirection,
}

#[derive(Debug, Clone)]
struct Mlp {
    hidden: Linear,
    output: Linear,
}

#[derive(Debug, Clone)]
struct Layout {
    word_embeddings: usize,
    position_embeddings: usize,
    embedding_norm: Norm,
    layers: Vec<EncoderLayer>,
    intra: BiGru,
    inter: BiGru,
    token_head: Mlp,
    sentence_head: Mlp,
    document_head: Mlp,
}

struct Builder<'s, R> {
    store: &'s mut ParamStore,
    rng: R,
}

impl<R: Rng> Builder<'_, R> {
    fn param(&mut self, name: &str, shape: Vec<usize>, init: Init) -> usize {
        self.store.register(name.to_string(), shape, init, &mut self.rng)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Linear {
        let weight = self.param(
            &format!("{name}.weight"),
            vec![fan_in, fan_out],
            Init::Glorot { fan_in, fan_out },
        );
        let bias = bias.then(|| self.param(&format!("{name}.bias"), vec![fan_out], Init::Zeros));
        Linear { weight, bias }
    }

    fn norm(&mut self, name: &str, width: usize) -> Norm {
        Norm {
            gamma: self.param(&format!("{name}.gamma"), vec![width], Init::Ones),
            beta: self.param(&format!("{name}.beta"), vec![width], Init::Zeros),
        }
    }

    fn gru_direction(&mut self, name: &str, input: usize, hidden: usize) -> GruDirection {
        let gate = Init::Glorot {
            fan_in: hidden,
            fan_out: hidden,
        };
        GruDirection {
            input: Linear {
                weight: self.param(
                    &format!("{name}.input.weight"),
                    vec![input, 3 * hidden],
                    Init::Glorot {
                        fan_in: input,
                        fan_out: hidden,
                    },
                ),
                bias: Some(self.param(&format!("{name}.input.bias"), vec![3 * hidden], Init::Zeros)),
            },
            gates: self.param(&format!("{name}.gates.weight"), vec![hidden, 2 * hidden], gate),
            candidate: self.param(&format!("{name}.candidate.weight"), vec![hidden, hidden], gate),
        }
    }

    fn bi_gru(&mut self, name: &str, input: usize, hidden: usize) -> BiGru {
        BiGru {
            forward: self.gru_direction(&format!("{name}.forward"), input, hidden),
            backward: self.gru_direction(&format!("{name}.backward"), input, hidden),
        }
    }

    fn mlp(&mut self, name: &str, input: usize, hidden: usize, output: usize) -> Mlp {
        Mlp {
            hidden: self.linear(&format!("{name}.hidden"), input, hidden, true),
            output: self.linear(&format!("{name}.output"), hidden, output, true),
        }
    }
}

/// Random dropout masks for training passes.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: (rate > 0.0).then(|| ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    fn apply(&mut self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_mut() else {
            return Ok(x);
        };
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..g.value(x).len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let m = g.constant(Tensor::new(g.shape(x).to_vec(), mask)?);
        Ok(g.mul(x, m)?)
    }
}

/// Graph handles of every parameter, in registration order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl std::ops::Index<usize> for Bound {
    type Output = Var;
    fn index(&self, i: usize) -> &Var {
        &self.vars[i]
    }
}

/// Real-token geometry of a batched document.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLayout {
    pub max_tokens: usize,
    pub sentences: usize,
    /// Real tokens per real sentence.
    pub lengths: Vec<usize>,
    /// Row of the first token of each real sentence in the flattened arrays.
    pub offsets: Vec<usize>,
}

impl TokenLayout {
    pub fn of(doc: &BatchedDocument) -> Result<Self> {
        let real = prefix_len(&doc.sentence_mask).ok_or_else(|| {
            crate::Error::Contract(format!("document {}: sentence mask is not a prefix", doc.id))
        })?;
        if real == 0 {
            return contract(format!("document {} has no sentences", doc.id));
        }
        let n = doc.max_tokens;
        let mut lengths = Vec::with_capacity(real);
        for i in 0..real {
            match prefix_len(&doc.token_mask[i * n..(i + 1) * n]) {
                Some(0) => return contract(format!("document {}: sentence {i} is empty", doc.id)),
                Some(l) => lengths.push(l),
                None => return contract(format!("document {}: sentence {i} has inner padding", doc.id)),
            }
        }
        let offsets = lengths
            .iter()
            .scan(0, |acc, &l| {
                let o = *acc;
                *acc += l;
                Some(o)
            })
            .collect();
        Ok(Self {
            max_tokens: n,
            sentences: doc.sentences(),
            lengths,
            offsets,
        })
    }

    pub fn real_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn real_sentences(&self) -> usize {
        self.lengths.len()
    }

    pub fn segments(&self) -> Vec<(usize, usize)> {
        self.offsets.iter().copied().zip(self.lengths.iter().copied()).collect()
    }

    /// Padded `(sentence, position)` index of every real token.
    pub fn padded_indices(&self) -> Vec<usize> {
        self.lengths
            .iter()
            .enumerate()
            .flat_map(|(i, &l)| (0..l).map(move |j| i * self.max_tokens + j))
            .collect()
    }

    /// Gathers per-position values of the real tokens.
    pub fn real<T: Copy>(&self, padded: &[T]) -> Vec<T> {
        self.padded_indices().into_iter().map(|i| padded[i]).collect()
    }
}

fn prefix_len(mask: &[bool]) -> Option<usize> {
    let l = mask.iter().take_while(|&&m| m).count();
    mask[l..].iter().all(|&m| !m).then_some(l)
}

/// Graph nodes produced by one forward pass, over real positions only.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub layout: TokenLayout,
    /// `(T, width)` encoder outputs for the `T` real tokens.
    pub b: Var,
    /// `(T, 2h)` token representations.
    pub c: Var,
    /// `(S, h)` sentence vectors.
    pub s: Var,
    /// `(S, 2h)` context-aware sentence vectors.
    pub p: Var,
    /// `(1, h)` document vector.
    pub d: Var,
    pub token_logits: Var,
    pub sentence_logits: Var,
    pub document_logit: Var,
}

/// Forward values laid out on the padded `S × N` grid; padding is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub b: Tensor,
    pub c: Tensor,
    pub s: Tensor,
    pub p: Tensor,
    pub d: Tensor,
    pub token_logits: Tensor,
    pub sentence_logits: Tensor,
    pub document_logit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Arg-max labels of the real tokens, per real sentence.
    pub labels: Vec<Vec<Label>>,
    pub sentence_probs: Vec<f64>,
    pub document_prob: f64,
}

#[derive(Debug, Clone)]
pub struct HierModel {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

impl HierModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::default();
        let mut b = Builder {
            store: &mut params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let (d, h) = (config.encoder_width, config.gru_hidden);
        let emb = Init::Normal(0.02);
        let word_embeddings = b.param("encoder.embeddings.word", vec![config.vocab.size, d], emb);
        let position_embeddings = b.param("encoder.embeddings.position", vec![config.max_positions, d], emb);
        let embedding_norm = b.norm("encoder.embeddings.norm", d);
        let layers = (0..config.encoder_layers)
            .map(|l| {
                let n = format!("encoder.layer{l}");
                EncoderLayer {
                    query: b.linear(&format!("{n}.attention.query"), d, d, true),
                    // A key bias only shifts each score row by a constant.
                    key: b.linear(&format!("{n}.attention.key"), d, d, false),
                    value: b.linear(&format!("{n}.attention.value"), d, d, true),
                    output: b.linear(&format!("{n}.attention.output"), d, d, true),
                    attention_norm: b.norm(&format!("{n}.attention.norm"), d),
                    ff_in: b.linear(&format!("{n}.ff.in"), d, config.encoder_ff_width, true),
                    ff_out: b.linear(&format!("{n}.ff.out"), config.encoder_ff_width, d, true),
                    ff_norm: b.norm(&format!("{n}.ff.norm"), d),
                }
            })
            .collect();
        let layout = Layout {
            word_embeddings,
            position_embeddings,
            embedding_norm,
            layers,
            intra: b.bi_gru("intra_gru", d, h),
            inter: b.bi_gru("inter_gru", h, h),
            token_head: b.mlp("token_head", 2 * h, config.token_mlp_hidden, config.num_labels),
            sentence_head: b.mlp("sentence_head", 2 * h, config.sentence_mlp_hidden, 1),
            document_head: b.mlp("document_head", h, config.document_mlp_hidden, 1),
        };
        Ok(Self {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Registers every parameter as a leaf of `g`.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| g.leaf(&p.tensor)).collect(),
        }
    }

    fn linear(&self, g: &mut Graph<'_>, p: &Bound, lin: &Linear, x: Var) -> Result<Var> {
        let y = g.matmul(x, p[lin.weight])?;
        Ok(match lin.bias {
            Some(b) => g.add_row(y, p[b])?,
            None => y,
        })
    }

    fn norm(&self, g: &mut Graph<'_>, p: &Bound, n: &Norm, x: Var) -> Result<Var> {
        Ok(g.layer_norm(x, p[n.gamma], p[n.beta], self.config.layer_norm_eps)?)
    }

    fn mlp(&self, g: &mut Graph<'_>, p: &Bound, m: &Mlp, x: Var, drop: &mut Dropout) -> Result<Var> {
        let h = self.linear(g, p, &m.hidden, x)?;
        let h = g.tanh(h);
        let h = drop.apply(g, h)?;
        self.linear(g, p, &m.output, h)
    }

    /// Encoder over the real tokens of several sentences at once. Tokens
    /// attend only within their own segment.
    fn encode_tokens(
        &self,
        g: &mut Graph<'_>,
        p: &Bound,
        ids: &[usize],
        positions: &[usize],
        segments: &[(usize, usize)],
        drop: &mut Dropout,
    ) -> Result<Var> {
        if let Some(&id) = ids.iter().find(|&&i| i >= self.config.vocab.size) {
            return contract(format!("token id {id} outside vocabulary of {}", self.config.vocab.size));
        }
        if let Some(&pos) = positions.iter().find(|&&i| i >= self.config.max_positions) {
            return contract(format!("position {pos} beyond {} positions", self.config.max_positions));
        }
        let l = &self.layout;
        let words = g.gather_rows(p[l.word_embeddings], ids)?;
        let pos = g.gather_rows(p[l.position_embeddings], positions)?;
        let x = g.add(words, pos)?;
        let x = self.norm(g, p, &l.embedding_norm, x)?;
        let mut x = drop.apply(g, x)?;
        for layer in &l.layers {
            let q = self.linear(g, p, &layer.query, x)?;
            let k = self.linear(g, p, &layer.key, x)?;
            let v = self.linear(g, p, &layer.value, x)?;
            let a = g.attention(q, k, v, segments, self.config.encoder_heads)?;
            let o = self.linear(g, p, &layer.output, a)?;
            let o = drop.apply(g, o)?;
            let sum = g.add(x, o)?;
            x = self.norm(g, p, &layer.attention_norm, sum)?;
            let f = self.linear(g, p, &layer.ff_in, x)?;
            let f = g.gelu(f);
            let f = self.linear(g, p, &layer.ff_out, f)?;
            let f = drop.apply(g, f)?;
            let sum = g.add(x, f)?;
            x = self.norm(g, p, &layer.ff_norm, sum)?;
        }
        Ok(x)
    }

    /// Bidirectional GRU over each row segment of `x`. Returns per segment
    /// the `(len, 2h)` states `[backward | forward]` and the `(1, h)` summary
    /// `backward[first] + forward[last]`.
    fn bi_gru(
        &self,
        g: &mut Graph<'_>,
        p: &Bound,
        gru: &BiGru,
        x: Var,
        segments: &[(usize, usize)],
    ) -> Result<(Vec<Var>, Vec<Var>)> {
        let af = self.linear(g, p, &gru.forward.input, x)?;
        let ab = self.linear(g, p, &gru.backward.input, x)?;
        let whole = segments.len() == 1 && segments[0] == (0, g.shape(x)[0]);
        let mut states = Vec::with_capacity(segments.len());
        let mut summaries = Vec::with_capacity(segments.len());
        for &(start, len) in segments {
            let (sf, sb) = if whole {
                (af, ab)
            } else {
                (g.slice_rows(af, start, start + len)?, g.slice_rows(ab, start, start + len)?)
            };
            let hf = g.gru(sf, p[gru.forward.gates], p[gru.forward.candidate], false)?;
            let hb = g.gru(sb, p[gru.backward.gates], p[gru.backward.candidate], true)?;
            states.push(g.concat_cols(&[hb, hf])?);
            let first = g.slice_rows(hb, 0, 1)?;
            let last = g.slice_rows(hf, len - 1, len)?;
            summaries.push(g.add(first, last)?);
        }
        Ok((states, summaries))
    }

    /// Encodes one sentence of `N` positions; masked positions neither attend
    /// nor are attended to, and their output rows are zero.
    pub fn encode_sentence(&self, g: &mut Graph<'_>, p: &Bound, ids: &[u32], mask: &[bool]) -> Result<Var> {
        if ids.len() != mask.len() {
            return contract(format!("{} ids with {} mask entries", ids.len(), mask.len()));
        }
        if ids.len() > self.config.max_positions {
            return contract(format!("{} tokens beyond {} positions", ids.len(), self.config.max_positions));
        }
        let real: Vec<usize> = (0..ids.len()).filter(|&j| mask[j]).collect();
        if real.is_empty() {
            return contract("sentence has no real tokens");
        }
        let tok: Vec<usize> = real.iter().map(|&j| ids[j] as usize).collect();
        let x = self.encode_tokens(g, p, &tok, &real, &[(0, real.len())], &mut Dropout::off())?;
        Ok(g.scatter_rows(x, &real, ids.len())?)
    }

    /// Token-level bi-GRU over the unpadded prefix of `b: (N, width)`.
    /// Returns `c: (N, 2h)` with zero rows at padding and `s: (1, h)`.
    pub fn intra_gru(&self, g: &mut Graph<'_>, p: &Bound, b: Var, mask: &[bool]) -> Result<(Var, Var)> {
        self.masked_bi_gru(g, p, &self.layout.intra, b, mask)
    }

    /// Sentence-level bi-GRU over `s: (S, h)`. Returns `p: (S, 2h)` and `d: (1, h)`.
    pub fn inter_gru(&self, g: &mut Graph<'_>, p: &Bound, s: Var, mask: &[bool]) -> Result<(Var, Var)> {
        self.masked_bi_gru(g, p, &self.layout.inter, s, mask)
    }

    fn masked_bi_gru(&self, g: &mut Graph<'_>, p: &Bound, gru: &BiGru, x: Var, mask: &[bool]) -> Result<(Var, Var)> {
        let n = g.shape(x)[0];
        if mask.len() != n {
            return contract(format!("{n} rows with {} mask entries", mask.len()));
        }
        let len = match prefix_len(mask) {
            Some(0) => return contract("sequence has no real positions"),
            Some(l) => l,
            None => return contract("padding must form a tail"),
        };
        let rows = if len == n { x } else { g.slice_rows(x, 0, len)? };
        let (states, summaries) = self.bi_gru(g, p, gru, rows, &[(0, len)])?;
        let states = if len == n {
            states[0]
        } else {
            g.scatter_rows(states[0], &(0..len).collect::<Vec<_>>(), n)?
        };
        Ok((states, summaries[0]))
    }

    /// One pass computing all three heads.
    pub fn forward(&self, g: &mut Graph<'_>, p: &Bound, doc: &BatchedDocument, drop: &mut Dropout) -> Result<ForwardVars> {
        if doc.max_tokens > self.config.max_positions {
            return contract(format!(
                "{} token positions beyond {} supported",
                doc.max_tokens, self.config.max_positions
            ));
        }
        let layout = TokenLayout::of(doc)?;
        let ids: Vec<usize> = layout.real(&doc.token_ids).into_iter().map(|i| i as usize).collect();
        let positions: Vec<usize> = layout.lengths.iter().flat_map(|&l| 0..l).collect();
        let segments = layout.segments();
        let b = self.encode_tokens(g, p, &ids, &positions, &segments, drop)?;
        let (cs, ss) = self.bi_gru(g, p, &self.layout.intra, b, &segments)?;
        let c = if cs.len() == 1 { cs[0] } else { g.concat_rows(&cs)? };
        let s = if ss.len() == 1 { ss[0] } else { g.concat_rows(&ss)? };
        let sentences = layout.real_sentences();
        let (ps, ds) = self.bi_gru(g, p, &self.layout.inter, s, &[(0, sentences)])?;
        let token_logits = self.mlp(g, p, &self.layout.token_head, c, drop)?;
        let sentence_logits = self.mlp(g, p, &self.layout.sentence_head, ps[0], drop)?;
        let document_logit = self.mlp(g, p, &self.layout.document_head, ds[0], drop)?;
        Ok(ForwardVars {
            layout,
            b,
            c,
            s,
            p: ps[0],
            d: ds[0],
            token_logits,
            sentence_logits,
            document_logit,
        })
    }

    /// Evaluation pass laid out on the padded grid.
    pub fn trace(&self, doc: &BatchedDocument) -> Result<ForwardTrace> {
        let mut g = Graph::inference();
        let p = self.bind(&mut g);
        let v = self.forward(&mut g, &p, doc, &mut Dropout::off())?;
        Ok(v.trace(&g))
    }

    pub fn predict(&self, doc: &BatchedDocument) -> Result<Prediction> {
        let mut g = Graph::inference();
        let p = self.bind(&mut g);
        let v = self.forward(&mut g, &p, doc, &mut Dropout::off())?;
        let classes = self.config.num_labels;
        let logits = g.value(v.token_logits);
        let labels = v
            .layout
            .segments()
            .iter()
            .map(|&(start, len)| {
                (start..start + len)
                    .map(|t| {
                        let row = &logits[t * classes..(t + 1) * classes];
                        let best = (0..classes).fold(0, |b, k| if row[k] > row[b] { k } else { b });
                        Label::from_id(best).expect("label id in range")
                    })
                    .collect()
            })
            .collect();
        Ok(Prediction {
            labels,
            sentence_probs: g.value(v.sentence_logits).iter().map(|&x| hiertag_tensor::sigmoid(x)).collect(),
            document_prob: hiertag_tensor::sigmoid(g.scalar(v.document_logit)),
        })
    }
}

impl ForwardVars {
    pub fn trace(&self, g: &Graph<'_>) -> ForwardTrace {
        let l = &self.layout;
        let (rows, n) = (l.sentences, l.max_tokens);
        let tokens = l.padded_indices();
        let grid = |v: Var| {
            let width = g.shape(v)[1];
            let mut out = vec![0.0; rows * n * width];
            for (t, chunk) in g.value(v).chunks(width).enumerate() {
                out[tokens[t] * width..(tokens[t] + 1) * width].copy_from_slice(chunk);
            }
            Tensor::new(vec![rows, n, width], out).expect("grid shape")
        };
        let per_sentence = |v: Var, flat: bool| {
            let width = g.shape(v)[1];
            let mut out = g.value(v).to_vec();
            out.resize(rows * width, 0.0);
            let shape = if flat { vec![rows] } else { vec![rows, width] };
            Tensor::new(shape, out).expect("sentence shape")
        };
        ForwardTrace {
            b: grid(self.b),
            c: grid(self.c),
            s: per_sentence(self.s, false),
            p: per_sentence(self.p, false),
            d: Tensor::vector(g.value(self.d).to_vec()),
            token_logits: grid(self.token_logits),
            sentence_logits: per_sentence(self.sentence_logits, true),
            document_logit: g.scalar(self.document_logit),
        }
    }
}
