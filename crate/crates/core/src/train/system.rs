use super::{TrainError, TrainMode};
use crate::audio::{Waveform, LENGTH_QUANTUM};
use crate::models::{LeNetClassifier, LeNetConfig, SeConfig, SeForward, SeModel};
use crate::tensor::{Graph, ParamId, ParamStore};
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SE_PREFIXES: [&str; 4] = ["encoder.", "bottleneck.", "decoder.", "output."];

/// Parameters plus whichever of the enhancement model and detector a mode uses.
#[derive(Debug, Clone)]
pub struct WuwSystem {
    pub store: ParamStore<f32>,
    pub se: Option<SeModel>,
    pub classifier: Option<LeNetClassifier<f32>>,
    /// Set once classifier weights have been copied from another run.
    pub pretrained_classifier: bool,
}

impl WuwSystem {
    /// Zero-valued parameters for the given components.
    pub fn build(se: Option<SeConfig>, classifier: Option<LeNetConfig>) -> Result<Self, TrainError> {
        if se.is_none() && classifier.is_none() {
            return Err(TrainError::Config("a system needs an enhancement model or a classifier"));
        }
        let mut store = ParamStore::new();
        let se = se.map(|c| SeModel::new(c, &mut store)).transpose()?;
        let classifier = classifier.map(|c| LeNetClassifier::new(c, &mut store)).transpose()?;
        Ok(Self {
            store,
            se,
            classifier,
            pretrained_classifier: false,
        })
    }

    /// The components `mode` trains, randomly initialized from `seed`.
    pub fn for_mode(mode: TrainMode, se: SeConfig, classifier: LeNetConfig, seed: u64) -> Result<Self, TrainError> {
        let mut sys = Self::build(
            mode.has_se().then_some(se),
            mode.has_classifier().then_some(classifier),
        )?;
        sys.init(seed);
        Ok(sys)
    }

    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(se) = &self.se {
            se.init(&mut self.store, &mut rng);
        }
        if let Some(c) = &self.classifier {
            c.init(&mut self.store, &mut rng);
        }
    }

    /// Copies every `classifier.*` parameter from `source`, which must provide all of them.
    pub fn load_pretrained_classifier(&mut self, source: &ParamStore<f32>) -> Result<(), TrainError> {
        if self.classifier.is_none() {
            return Err(TrainError::Config("system has no classifier"));
        }
        let expected = LeNetClassifier::param_ids(&self.store).len();
        if self.store.copy_matching(source, "classifier.") != expected {
            return Err(TrainError::Config("pretrained checkpoint lacks matching classifier parameters"));
        }
        self.pretrained_classifier = true;
        Ok(())
    }

    /// Enhancement model from `se_source` in front of the classifier from `clf_source`.
    pub fn compose(se_source: &WuwSystem, clf_source: &WuwSystem) -> Result<Self, TrainError> {
        let se = se_source.se.as_ref().ok_or(TrainError::Capability("no enhancement model"))?;
        let clf = clf_source.classifier.as_ref().ok_or(TrainError::Capability("no classifier"))?;
        let mut sys = Self::build(Some(se.config.clone()), Some(clf.config))?;
        let copied: usize = SE_PREFIXES
            .iter()
            .map(|p| sys.store.copy_matching(&se_source.store, p))
            .sum();
        if copied != SeModel::param_ids(&sys.store).len() {
            return Err(TrainError::Config("enhancement parameters do not match"));
        }
        sys.load_pretrained_classifier(&clf_source.store)?;
        Ok(sys)
    }

    pub fn se_ids(&self) -> Vec<ParamId> {
        if self.se.is_some() {
            SeModel::param_ids(&self.store)
        } else {
            Vec::new()
        }
    }

    pub fn classifier_ids(&self) -> Vec<ParamId> {
        if self.classifier.is_some() {
            LeNetClassifier::param_ids(&self.store)
        } else {
            Vec::new()
        }
    }

    /// Runs the enhancement model on an arbitrary-length waveform, zero-padding
    /// to a multiple of 32 samples and trimming back.
    pub fn enhance(&self, w: &Waveform) -> Result<Waveform, TrainError> {
        let se = self.se.as_ref().ok_or(TrainError::Capability("checkpoint has no enhancement model"))?;
        let len = w.len();
        let padded = len.div_ceil(LENGTH_QUANTUM) * LENGTH_QUANTUM;
        let mut data = w.samples().to_vec();
        data.resize(padded, 0.0);
        let mut g = Graph::new();
        let x = g.constant(&[1, 1, padded], data)?;
        let out = se.forward(
            &mut g,
            &self.store,
            x,
            SeForward {
                trainable: false,
                skips: true,
            },
        )?;
        let mut y = g.value(out.output).to_vec();
        y.truncate(len);
        Ok(Waveform::new(y)?)
    }

    /// Detection probability of one window, optionally enhanced first.
    pub fn score(&self, w: &Waveform, use_se: bool) -> Result<f64, TrainError> {
        let clf = self
            .classifier
            .as_ref()
            .ok_or(TrainError::Capability("checkpoint has no classifier"))?;
        let input = if use_se { self.enhance(w)? } else { w.clone() };
        let mut g = Graph::new();
        let x = g.constant(&[1, 1, input.len()], input.into_samples())?;
        let p = clf.forward(&mut g, &self.store, x, false)?;
        Ok(g.value(p)[0] as f64)
    }

    /// Default scoring path: through the enhancement model when present.
    pub fn score_default(&self, w: &Waveform) -> Result<f64, TrainError> {
        self.score(w, self.se.is_some())
    }

    pub fn score_all(&self, ws: &[Waveform], use_se: bool) -> Result<Vec<f64>, TrainError> {
        let mut out = vec![0.0; ws.len()];
        for (o, w) in out.iter_mut().zip(ws) {
            *o = self.score(w, use_se)?;
        }
        Ok(out)
    }
}
