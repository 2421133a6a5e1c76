//! The model as seen by curricula and metrics: something that answers task inputs,
//! scores given answers, and (for learners) trains on examples.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use cedc_nn::{
    adamw_step, read_checkpoint, write_checkpoint, OptimizerConfig, ParameterStore, Real,
    TokenBatch, Transformer, TransformerConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::tasks::{Example, Task, Vocabulary, EOS, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub output: String,
    /// Least confident greedy step (max softmax probability), in `(0, 1]`.
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScore {
    /// Mean negative log-likelihood over the answer tokens and the end token.
    pub mean_nll: f64,
    /// Probability of the answer characters (end token excluded).
    pub probability: f64,
}

pub trait Predictor: Sync {
    fn predict(&self, task: &dyn Task, inputs: &[String]) -> Result<Vec<Prediction>>;

    fn score(
        &self,
        task: &dyn Task,
        inputs: &[String],
        targets: &[String],
    ) -> Result<Vec<TargetScore>>;
}

/// A predictor that can also be fine-tuned.
pub trait Trainable: Predictor {
    /// Runs `steps` optimizer steps on batches drawn uniformly from `data`; returns the mean loss.
    fn train_steps(&mut self, task: &dyn Task, data: &[Example], steps: usize) -> Result<f64>;

    fn steps_taken(&self) -> u64;
}

/// Borrowed weights plus the vocabulary they were trained with.
pub struct ModelPredictor<'a> {
    pub model: &'a Transformer<Real>,
    pub store: &'a ParameterStore<Real>,
    pub vocab: &'a Vocabulary,
}

impl ModelPredictor<'_> {
    fn check_vocab(&self, task: &dyn Task) -> Result<()> {
        check_alphabet(self.vocab, task)
    }
}

/// Fails unless every character of the task's alphabet has a token.
pub fn check_alphabet(vocab: &Vocabulary, task: &dyn Task) -> Result<()> {
    let missing: BTreeSet<char> = task
        .alphabet()
        .chars()
        .filter(|&c| !vocab.contains(c))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CoreError::Config(format!(
            "task {} uses characters {:?} that the model vocabulary {:?} lacks",
            task.name(),
            missing,
            vocab.alphabet()
        )))
    }
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, task: &dyn Task, inputs: &[String]) -> Result<Vec<Prediction>> {
        self.check_vocab(task)?;
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, x) in inputs.iter().enumerate() {
            groups
                .entry(task.max_answer_len(x) + 1)
                .or_default()
                .push(i);
        }
        let mut out: Vec<Option<Prediction>> = vec![None; inputs.len()];
        for (max_new, idx) in groups {
            let prompts = idx
                .iter()
                .map(|&i| self.vocab.frame_prompt(&task.model_input(&inputs[i])))
                .collect::<Result<Vec<_>>>()?;
            let decoded = self
                .model
                .predict_greedy_batch(self.store, &prompts, max_new, EOS)?;
            for (&i, d) in idx.iter().zip(decoded) {
                out[i] = Some(Prediction {
                    output: self.vocab.read_answer(&d.tokens, task.reversed_answer()),
                    confidence: d.confidence(),
                });
            }
        }
        Ok(out
            .into_iter()
            .map(|p| p.expect("all inputs grouped"))
            .collect())
    }

    fn score(
        &self,
        task: &dyn Task,
        inputs: &[String],
        targets: &[String],
    ) -> Result<Vec<TargetScore>> {
        self.check_vocab(task)?;
        let prompts = inputs
            .iter()
            .map(|x| self.vocab.frame_prompt(&task.model_input(x)))
            .collect::<Result<Vec<_>>>()?;
        let answers = targets
            .iter()
            .map(|t| self.vocab.frame_target(t, task.reversed_answer()))
            .collect::<Result<Vec<_>>>()?;
        let lps = self
            .model
            .target_log_probs(self.store, &prompts, &answers, PAD)?;
        Ok(lps
            .into_iter()
            .map(|lp| {
                let answer: f64 = lp[..lp.len() - 1].iter().sum();
                TargetScore {
                    mean_nll: -lp.iter().sum::<f64>() / lp.len() as f64,
                    probability: answer.exp(),
                }
            })
            .collect())
    }
}

/// A transformer, its weights and optimizer state, and the sampling stream used for batches.
pub struct Learner {
    model: Transformer<Real>,
    store: ParameterStore<Real>,
    vocab: Vocabulary,
    opt: OptimizerConfig,
    rng: ChaCha8Rng,
}

impl Learner {
    /// Fresh weights; `config.vocab_size` is taken from the vocabulary.
    pub fn new(
        mut config: TransformerConfig,
        opt: OptimizerConfig,
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self> {
        opt.validate()?;
        config.vocab_size = vocab.len();
        let (model, store) = Transformer::init(config, seed)?;
        let rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c);
        Ok(Self {
            model,
            store,
            vocab,
            opt,
            rng,
        })
    }

    pub fn from_parts(
        config: TransformerConfig,
        store: ParameterStore<Real>,
        vocab: Vocabulary,
        opt: OptimizerConfig,
        seed: u64,
    ) -> Result<Self> {
        if config.vocab_size != vocab.len() {
            return Err(CoreError::Config(format!(
                "model has {} token ids but vocabulary {:?} has {}",
                config.vocab_size,
                vocab.alphabet(),
                vocab.len()
            )));
        }
        let model = Transformer::bind(config, &store)?;
        Ok(Self {
            model,
            store,
            vocab,
            opt,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c),
        })
    }

    pub fn predictor(&self) -> ModelPredictor<'_> {
        ModelPredictor {
            model: &self.model,
            store: &self.store,
            vocab: &self.vocab,
        }
    }

    pub fn config(&self) -> &TransformerConfig {
        self.model.config()
    }

    pub fn store(&self) -> &ParameterStore<Real> {
        &self.store
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn optimizer(&self) -> &OptimizerConfig {
        &self.opt
    }

    /// One optimizer step on exactly these examples; returns the batch loss.
    pub fn train_batch(&mut self, task: &dyn Task, batch: &[&Example]) -> Result<f64> {
        let (tokens, targets, mask) = self.encode_batch(task, batch)?;
        let dropout = (self.model.config().dropout > 0.0).then_some(&mut self.rng);
        let (loss, grads) =
            self.model
                .loss_and_gradients(&self.store, &tokens, targets, mask, dropout)?;
        self.store.accumulate(grads)?;
        adamw_step(&mut self.store, &self.opt)?;
        Ok(loss)
    }

    /// Teacher-forcing layout: row `i` predicts token `i + 1`; only answer positions count.
    fn encode_batch(
        &self,
        task: &dyn Task,
        batch: &[&Example],
    ) -> Result<(TokenBatch, Vec<usize>, Vec<bool>)> {
        let mut seqs = Vec::with_capacity(batch.len());
        let mut prompt_lens = Vec::with_capacity(batch.len());
        for ex in batch {
            let mut s = self.vocab.frame_prompt(&task.model_input(&ex.input))?;
            prompt_lens.push(s.len());
            s.extend(
                self.vocab
                    .frame_target(&ex.target, task.reversed_answer())?,
            );
            seqs.push(s);
        }
        let seq = seqs.iter().map(Vec::len).max().unwrap_or(1) - 1;
        let mut tokens = Vec::with_capacity(batch.len() * seq);
        let mut targets = Vec::with_capacity(batch.len() * seq);
        let mut mask = Vec::with_capacity(batch.len() * seq);
        for (s, &p) in seqs.iter().zip(&prompt_lens) {
            for i in 0..seq {
                tokens.push(s.get(i).copied().unwrap_or(PAD));
                let next = s.get(i + 1).copied();
                targets.push(next.unwrap_or(PAD) as usize);
                mask.push(next.is_some() && i + 1 >= p);
            }
        }
        Ok((TokenBatch::new(tokens, batch.len(), seq)?, targets, mask))
    }

    pub fn save_checkpoint(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<()> {
        let mut meta = extra.clone();
        meta.insert("alphabet".into(), self.vocab.alphabet().to_string());
        let file = std::fs::File::create(path)?;
        write_checkpoint(
            std::io::BufWriter::new(file),
            self.model.config(),
            &self.store,
            &meta,
        )?;
        Ok(())
    }

    /// Loads weights and vocabulary from a checkpoint written by [`save_checkpoint`](Self::save_checkpoint).
    pub fn load_checkpoint(
        path: &Path,
        opt: OptimizerConfig,
        seed: u64,
    ) -> Result<(Self, BTreeMap<String, String>)> {
        let ckpt = read_checkpoint::<Real, _>(std::io::BufReader::new(std::fs::File::open(path)?))?;
        let alphabet = ckpt.metadata.get("alphabet").ok_or_else(|| {
            CoreError::Config(format!("{} records no vocabulary", path.display()))
        })?;
        let vocab = Vocabulary::new(alphabet)?;
        let learner = Self::from_parts(ckpt.config, ckpt.store, vocab, opt, seed)?;
        Ok((learner, ckpt.metadata))
    }
}

impl Predictor for Learner {
    fn predict(&self, task: &dyn Task, inputs: &[String]) -> Result<Vec<Prediction>> {
        self.predictor().predict(task, inputs)
    }

    fn score(
        &self,
        task: &dyn Task,
        inputs: &[String],
        targets: &[String],
    ) -> Result<Vec<TargetScore>> {
        self.predictor().score(task, inputs, targets)
    }
}

impl Trainable for Learner {
    fn train_steps(&mut self, task: &dyn Task, data: &[Example], steps: usize) -> Result<f64> {
        if data.is_empty() {
            return Err(CoreError::Input("cannot train on an empty dataset".into()));
        }
        let mut total = 0.0;
        for _ in 0..steps {
            let batch: Vec<&Example> = (0..self.opt.batch_size)
                .map(|_| &data[self.rng.gen_range(0..data.len())])
                .collect();
            total += self.train_batch(task, &batch)?;
        }
        Ok(if steps == 0 {
            0.0
        } else {
            total / steps as f64
        })
    }

    fn steps_taken(&self) -> u64 {
        self.store.step()
    }
}

/// Answers with the task oracle, except on inputs selected by `fails`, where it appends `?`.
/// Training only counts steps.
pub struct StubPredictor {
    fails: Box<dyn Fn(&str) -> bool + Send + Sync>,
    steps: u64,
}

impl StubPredictor {
    pub fn oracle() -> Self {
        Self::failing_when(|_| false)
    }

    pub fn always_wrong() -> Self {
        Self::failing_when(|_| true)
    }

    pub fn failing_when(fails: impl Fn(&str) -> bool + Send + Sync + 'static) -> Self {
        Self {
            fails: Box::new(fails),
            steps: 0,
        }
    }
}

impl Predictor for StubPredictor {
    fn predict(&self, task: &dyn Task, inputs: &[String]) -> Result<Vec<Prediction>> {
        inputs
            .iter()
            .map(|x| {
                let mut output = task.oracle(x)?;
                if (self.fails)(x) {
                    output.push('?');
                }
                Ok(Prediction {
                    output,
                    confidence: 1.0,
                })
            })
            .collect()
    }

    fn score(
        &self,
        task: &dyn Task,
        inputs: &[String],
        targets: &[String],
    ) -> Result<Vec<TargetScore>> {
        inputs
            .iter()
            .zip(targets)
            .map(|(x, t)| {
                let right = task.oracle(x)? == *t && !(self.fails)(x);
                Ok(if right {
                    TargetScore {
                        mean_nll: 0.0,
                        probability: 1.0,
                    }
                } else {
                    TargetScore {
                        mean_nll: 10.0,
                        probability: 0.0,
                    }
                })
            })
            .collect()
    }
}

impl Trainable for StubPredictor {
    fn train_steps(&mut self, _task: &dyn Task, data: &[Example], steps: usize) -> Result<f64> {
        if data.is_empty() {
            return Err(CoreError::Input("cannot train on an empty dataset".into()));
        }
        self.steps += steps as u64;
        Ok(0.0)
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{make_initial_dataset, Addition, SynthClass, TaskKind};

    fn tiny() -> TransformerConfig {
        TransformerConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            max_seq_len: 32,
            ..Default::default()
        }
    }

    #[test]
    fn loss_mask_covers_answer_and_end_token_only() {
        let learner =
            Learner::new(tiny(), OptimizerConfig::default(), Addition.vocabulary(), 1).unwrap();
        let ex = Example {
            input: "12+7".into(),
            target: "19".into(),
            difficulty: 2,
        };
        let (tokens, targets, mask) = learner.encode_batch(&Addition, &[&ex]).unwrap();
        // <bos> 1 2 + 7 <sep> 9 1 <eos>  -> 8 input positions
        assert_eq!(tokens.seq, 8);
        assert_eq!(
            mask,
            vec![false, false, false, false, false, true, true, true]
        );
        let v = learner.vocab();
        assert_eq!(targets[5], v.token('9').unwrap() as usize);
        assert_eq!(targets[6], v.token('1').unwrap() as usize);
        assert_eq!(targets[7], EOS as usize);
    }

    #[test]
    fn vocabulary_mismatch_is_config_error() {
        let learner = Learner::new(
            tiny(),
            OptimizerConfig::default(),
            SynthClass.vocabulary(),
            1,
        )
        .unwrap();
        let err = learner
            .predict(TaskKind::Addition.task(), &["1+1".to_string()])
            .unwrap_err();
        assert!(matches!(err, CoreError::Config(_)), "{err}");
    }

    #[test]
    fn training_reduces_loss_and_counts_steps() {
        let mut learner =
            Learner::new(tiny(), OptimizerConfig::default(), Addition.vocabulary(), 2).unwrap();
        let data = make_initial_dataset(&Addition, 64, 2, 3).unwrap();
        let first = learner.train_steps(&Addition, &data, 5).unwrap();
        let later = learner.train_steps(&Addition, &data, 60).unwrap();
        assert!(later < first, "{later} !< {first}");
        assert_eq!(learner.steps_taken(), 65);
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let mut learner =
            Learner::new(tiny(), OptimizerConfig::default(), Addition.vocabulary(), 4).unwrap();
        let data = make_initial_dataset(&Addition, 32, 2, 3).unwrap();
        learner.train_steps(&Addition, &data, 10).unwrap();
        let path = dir.path().join("m.ckpt");
        learner.save_checkpoint(&path, &BTreeMap::new()).unwrap();
        let (back, meta) = Learner::load_checkpoint(&path, OptimizerConfig::default(), 0).unwrap();
        assert_eq!(meta["alphabet"], Addition.vocabulary().alphabet());
        let inputs: Vec<String> = data.iter().map(|e| e.input.clone()).collect();
        assert_eq!(
            learner.predict(&Addition, &inputs).unwrap(),
            back.predict(&Addition, &inputs).unwrap()
        );
    }
}
