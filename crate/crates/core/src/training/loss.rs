use std::fmt;
use std::str::FromStr;

use hiertag_tensor::{Graph, Var};
use serde::{Deserialize, Serialize};

use crate::corpus::BatchedDocument;
use crate::error::{contract, Error, Result};
use crate::model::{Dropout, ForwardVars, HierModel};

/// Which auxiliary losses join the token loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variation {
    #[serde(rename = "exp_base")]
    Baseline,
    #[serde(rename = "sent")]
    Sent,
    #[serde(rename = "doc")]
    Doc,
    #[serde(rename = "sent+doc")]
    SentDoc,
}

impl Variation {
    pub const ALL: [Variation; 4] = [Variation::Baseline, Variation::Sent, Variation::Doc, Variation::SentDoc];

    /// Column label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Variation::Baseline => "exp_base",
            Variation::Sent => "sent",
            Variation::Doc => "doc",
            Variation::SentDoc => "sent+doc",
        }
    }
}

impl fmt::Display for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" | "exp_base" | "base" => Ok(Variation::Baseline),
            "sent" => Ok(Variation::Sent),
            "doc" => Ok(Variation::Doc),
            "sent+doc" | "sent_doc" | "both" => Ok(Variation::SentDoc),
            _ => Err(Error::Config(format!("unknown variation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSpec {
    pub gate_token: bool,
    pub gate_sentence: bool,
    pub gate_document: bool,
    pub scale_token: f64,
    pub scale_sentence: f64,
    pub scale_document: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::for_variation(Variation::Baseline)
    }
}

impl LossSpec {
    pub fn for_variation(v: Variation) -> Self {
        Self {
            gate_token: true,
            gate_sentence: matches!(v, Variation::Sent | Variation::SentDoc),
            gate_document: matches!(v, Variation::Doc | Variation::SentDoc),
            scale_token: 1.0,
            scale_sentence: 1.0,
            scale_document: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gate_token {
            return Err(Error::Config("the token loss cannot be gated off".into()));
        }
        for s in [self.scale_token, self.scale_sentence, self.scale_document] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("loss scale {s} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    /// Whether `doc` has any target this spec trains on.
    pub fn has_targets(&self, doc: &BatchedDocument) -> bool {
        doc.has_token_targets()
            || (self.gate_sentence && doc.has_sentence_targets())
            || (self.gate_document && doc.document_label.is_some())
    }
}

/// Per-task losses; absent when the document has no targets for the task.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub token: Option<Var>,
    pub sentence: Option<Var>,
    pub document: Option<Var>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub token: Option<f64>,
    pub sentence: Option<f64>,
    pub document: Option<f64>,
}

impl LossVars {
    pub fn values(&self, g: &Graph<'_>) -> LossValues {
        LossValues {
            total: g.scalar(self.total),
            token: self.token.map(|v| g.scalar(v)),
            sentence: self.sentence.map(|v| g.scalar(v)),
            document: self.document.map(|v| g.scalar(v)),
        }
    }
}

fn binary(label: Option<bool>) -> Option<f64> {
    label.map(|b| if b { 1.0 } else { 0.0 })
}

/// Builds every available task loss and the gated, scaled total. Gated-off
/// losses are still computed for monitoring.
pub fn compute_losses(
    g: &mut Graph<'_>,
    fv: &ForwardVars,
    doc: &BatchedDocument,
    spec: &LossSpec,
) -> Result<LossVars> {
    let layout = &fv.layout;
    let token_targets: Vec<Option<usize>> = layout
        .real(&doc.token_labels)
        .into_iter()
        .map(|l| l.map(|l| l.id()))
        .collect();
    let token = if token_targets.iter().any(Option::is_some) {
        Some(g.cross_entropy(fv.token_logits, &token_targets)?)
    } else {
        None
    };
    let sentence_targets: Vec<Option<f64>> = doc.sentence_labels[..layout.real_sentences()]
        .iter()
        .map(|&l| binary(l))
        .collect();
    let sentence = if sentence_targets.iter().any(Option::is_some) {
        Some(g.bce_with_logits(fv.sentence_logits, &sentence_targets)?)
    } else {
        None
    };
    let document = match binary(doc.document_label) {
        Some(t) => Some(g.bce_with_logits(fv.document_logit, &[Some(t)])?),
        None => None,
    };
    let mut total: Option<Var> = None;
    for (gate, scale, loss) in [
        (spec.gate_token, spec.scale_token, token),
        (spec.gate_sentence, spec.scale_sentence, sentence),
        (spec.gate_document, spec.scale_document, document),
    ] {
        let (true, Some(loss)) = (gate, loss) else { continue };
        let term = g.scale(loss, scale);
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    let Some(total) = total else {
        return contract(format!("document {} has no targets for the active losses", doc.id));
    };
    Ok(LossVars {
        total,
        token,
        sentence,
        document,
    })
}

/// Loss values of one evaluation pass.
pub fn loss_values(model: &HierModel, doc: &BatchedDocument, spec: &LossSpec) -> Result<LossValues> {
    let mut g = Graph::inference();
    let p = model.bind(&mut g);
    let fv = model.forward(&mut g, &p, doc, &mut Dropout::off())?;
    Ok(compute_losses(&mut g, &fv, doc, spec)?.values(&g))
}

/// Gradient of the gated total for one document, per parameter index;
/// `None` where no gradient reaches a parameter.
pub fn document_gradients(
    model: &HierModel,
    doc: &BatchedDocument,
    spec: &LossSpec,
    dropout: &mut Dropout,
) -> Result<(LossValues, Vec<Option<Vec<f64>>>)> {
    let mut g = Graph::new();
    let p = model.bind(&mut g);
    let fv = model.forward(&mut g, &p, doc, dropout)?;
    let losses = compute_losses(&mut g, &fv, doc, spec)?;
    let grads = g.backward(losses.total)?;
    let per_param = p.vars().iter().map(|&v| grads.get(v).map(<[f64]>::to_vec)).collect();
    Ok((losses.values(&g), per_param))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{batch_document, sample::example_document, BatchConfig};
    use crate::model::ModelConfig;

    fn zero_heads(m: &mut HierModel) {
        for p in m.params_mut().iter_mut() {
            if p.name.contains("head.output") {
                p.tensor.data_mut().fill(0.0);
            }
        }
    }

    fn setup() -> (HierModel, BatchedDocument) {
        let mut m = HierModel::new(ModelConfig::tiny(), 2).unwrap();
        zero_heads(&mut m);
        let d = example_document("x");
        let mut d2 = d.clone();
        d2.derive_coarse().unwrap();
        let b = batch_document(&d2, &m.config().vocab, BatchConfig { max_tokens: 20, max_sentences: 4 }).unwrap();
        (m, b)
    }

    #[test]
    fn uniform_logits_give_reference_losses() {
        let (m, b) = setup();
        let v = loss_values(&m, &b, &LossSpec::for_variation(Variation::SentDoc)).unwrap();
        assert!((v.token.unwrap() - 15f64.ln()).abs() < 1e-12);
        assert!((v.sentence.unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((v.document.unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((v.total - (15f64.ln() + 2.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn baseline_total_is_exactly_the_token_loss() {
        let (m, b) = setup();
        let m = HierModel::new(m.config().clone(), 9).unwrap();
        let v = loss_values(&m, &b, &LossSpec::for_variation(Variation::Baseline)).unwrap();
        assert_eq!(v.total, v.token.unwrap());
        assert!(v.sentence.is_some() && v.document.is_some());
        let spec = LossSpec { scale_token: 0.5, ..LossSpec::default() };
        let half = loss_values(&m, &b, &spec).unwrap();
        assert_eq!(half.total, 0.5 * v.token.unwrap());
    }

    #[test]
    fn missing_targets_contribute_nothing() {
        let (m, mut b) = setup();
        let spec = LossSpec::for_variation(Variation::SentDoc);
        let full = loss_values(&m, &b, &spec).unwrap();
        b.token_labels.iter_mut().for_each(|l| *l = None);
        let coarse = loss_values(&m, &b, &spec).unwrap();
        assert_eq!(coarse.token, None);
        assert!((coarse.total - (full.total - full.token.unwrap())).abs() < 1e-12);
        b.document_label = None;
        b.sentence_labels.iter_mut().for_each(|l| *l = None);
        assert!(loss_values(&m, &b, &spec).is_err());
    }

    #[test]
    fn token_loss_leaves_upper_layers_without_gradient() {
        let (m, b) = setup();
        let m = HierModel::new(m.config().clone(), 4).unwrap();
        let (_, grads) = document_gradients(&m, &b, &LossSpec::default(), &mut Dropout::off()).unwrap();
        for (p, g) in m.params().iter().zip(&grads) {
            let upper = p.name.starts_with("inter_gru") || p.name.starts_with("sentence_head") || p.name.starts_with("document_head");
            assert_eq!(g.is_none(), upper, "{}", p.name);
        }
    }

    #[test]
    fn variations_parse_and_gate() {
        for v in Variation::ALL {
            assert_eq!(v.label().parse::<Variation>().unwrap(), v);
        }
        assert_eq!("baseline".parse::<Variation>().unwrap(), Variation::Baseline);
        assert!("weird".parse::<Variation>().is_err());
        let s = LossSpec::for_variation(Variation::Doc);
        assert!(!s.gate_sentence && s.gate_document);
        assert!(LossSpec { scale_sentence: -1.0, ..s }.validate().is_err());
        assert!(LossSpec { gate_token: false, ..s }.validate().is_err());
    }
}
