//! Ordinal question-type classifier: frozen pooled encoding, then affine + sigmoid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::frozen::FrozenEncoder;
use crate::error::{Error, Result};
use crate::nn::tensor::{dot, sigmoid};
use crate::nn::{optimize_step, OptimizerState, ParamGroup, ParamId, ParameterSet, Tape, Tensor};

pub const CLS_W: &str = "qtype.w";
pub const CLS_B: &str = "qtype.b";

#[derive(Clone, Copy, Debug)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuestionTypeClassifier {
    params: ParameterSet,
    w: ParamId,
    b: ParamId,
    trained: bool,
}

impl QuestionTypeClassifier {
    pub fn new(d_enc: usize) -> Self {
        let mut params = ParameterSet::new();
        let w = params.insert_zeros(CLS_W, ParamGroup::Classifier, d_enc, 1).unwrap();
        let b = params.insert_zeros(CLS_B, ParamGroup::Classifier, 1, 1).unwrap();
        Self {
            params,
            w,
            b,
            trained: false,
        }
    }

    /// Rebuilds a trained classifier from saved parameters.
    pub fn from_params(params: ParameterSet) -> Result<Self> {
        let w = params.require(CLS_W)?;
        let b = params.require(CLS_B)?;
        Ok(Self {
            params,
            w,
            b,
            trained: true,
        })
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Logistic regression on pooled question vectors; returns training accuracy.
    pub fn train(
        &mut self,
        encoder: &FrozenEncoder,
        examples: &[(String, bool)],
        config: &ClassifierTrainConfig,
    ) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::data("classifier training set is empty"));
        }
        let positives = examples.iter().filter(|(_, y)| *y).count();
        if positives == 0 || positives == examples.len() {
            return Err(Error::data("classifier training labels are all one class"));
        }
        let xs: Vec<Vec<f64>> = examples
            .iter()
            .map(|(q, _)| encoder.encode_question(q).map(|e| e.pooled))
            .collect::<Result<_>>()?;
        let d = encoder.d_enc();
        if self.params.value(self.w).rows() != d {
            return Err(Error::shape(format!(
                "classifier expects width {}, encoder gives {d}",
                self.params.value(self.w).rows()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut opt = OptimizerState::adam(config.learning_rate);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size.max(1)) {
                let mut x = Tensor::zeros(chunk.len(), d);
                for (r, &i) in chunk.iter().enumerate() {
                    x.row_mut(r).copy_from_slice(&xs[i]);
                }
                let targets: Vec<f64> = chunk.iter().map(|&i| examples[i].1 as u8 as f64).collect();
                let mut tape = Tape::new(&self.params);
                let xv = tape.constant(x);
                let w = tape.param(self.w);
                let b = tape.param(self.b);
                let z = tape.matmul(xv, w);
                let z = tape.add_row(z, b);
                let p = tape.sigmoid(z);
                let loss = tape.bce(p, &targets);
                let g = tape.backward(loss);
                drop(tape);
                optimize_step(&mut self.params, &g, &mut opt)?;
            }
        }
        self.trained = true;
        let correct = xs
            .iter()
            .zip(examples)
            .filter(|(x, (_, y))| (self.pooled_probability(x) > 0.5) == *y)
            .count();
        Ok(correct as f64 / xs.len() as f64)
    }

    fn pooled_probability(&self, pooled: &[f64]) -> f64 {
        sigmoid(dot(self.params.value(self.w).data(), pooled) + self.params.value(self.b).item())
    }

    /// p(question is ordinal).
    pub fn probability(&self, encoder: &FrozenEncoder, text: &str) -> Result<f64> {
        if !self.trained {
            return Err(Error::Usage("question-type classifier has not been trained".into()));
        }
        Ok(self.pooled_probability(&encoder.encode_question(text)?.pooled))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;

    fn corpus() -> Vec<(String, bool)> {
        let dets = ["largest", "smallest", "earliest", "latest", "most", "least"];
        let rels = ["area", "population", "release date", "sales", "price"];
        let mut out = Vec::new();
        for i in 0..40 {
            let d = dets[i % dets.len()];
            let r = rels[i % rels.len()];
            out.push((format!("What is the city of country_{i} that has the {d} {r} ?"), true));
            out.push((format!("Which album of artist_{i} has the {d} {r} ?"), true));
            out.push((format!("What is the genre of album_{i} ?"), false));
            out.push((format!("Which country is city_{i} located in ?"), false));
        }
        out
    }

    #[test]
    fn untrained_is_usage_error() {
        let enc = FrozenEncoder::new(EncoderConfig::default()).unwrap();
        let c = QuestionTypeClassifier::new(64);
        assert!(matches!(c.probability(&enc, "which album"), Err(Error::Usage(_))));
    }

    #[test]
    fn degenerate_labels_rejected() {
        let enc = FrozenEncoder::new(EncoderConfig::default()).unwrap();
        let mut c = QuestionTypeClassifier::new(64);
        let all: Vec<(String, bool)> = corpus().into_iter().map(|(q, _)| (q, true)).collect();
        assert!(matches!(c.train(&enc, &all, &Default::default()), Err(Error::Data(_))));
    }

    #[test]
    fn template_questions_are_confidently_ordinal() {
        let enc = FrozenEncoder::new(EncoderConfig::default()).unwrap();
        let mut c = QuestionTypeClassifier::new(64);
        let acc = c.train(&enc, &corpus(), &Default::default()).unwrap();
        assert!(acc > 0.97, "train accuracy {acc}");
        let q = "What is the city of country_77 that has the largest area ?";
        let p = c.probability(&enc, q).unwrap();
        assert!(p > 0.9, "p = {p}");
        assert_eq!(p, c.probability(&enc, q).unwrap());
        assert!(c.probability(&enc, "What is the genre of album_91 ?").unwrap() < 0.1);
    }
}
