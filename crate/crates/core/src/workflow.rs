//! End-to-end glue shared by the command line, the C interface and tests:
//! records to a sorted metric stream, classifier fitting, and running any
//! relabeling method over a stream.

use serde::{Deserialize, Serialize};

use crate::baselines::{self, AtdConfig, CbtrConfig, CbtrLazy, KfConfig, KfModel};
use crate::classifier::{self, Classifier, Example, TrainConfig, TrainReport};
use crate::dataio;
use crate::error::{Error, Result};
use crate::evaluation::{self, ClassReport, PositKey, PositScore, ScoreOptions};
use crate::features::{assemble_input, FeatureSchema};
use crate::kinematics::{Posit, RawRecord};
use crate::tracker::{self, Decider, LabeledStream, PipelineConfig, RawQuery, TruthIndex};
use crate::utm::UtmZone;

/// Records converted into one UTM frame and sorted by `(time, point_id)`.
#[derive(Debug, Clone)]
pub struct Stream {
    pub posits: Vec<Posit>,
    /// Index into the source records of each posit.
    pub order: Vec<usize>,
    /// Ground-truth track id per posit, when every record carries one.
    pub truth: Option<Vec<u64>>,
    pub zone: UtmZone,
}

impl Stream {
    pub fn from_records(records: &[RawRecord], zone: Option<UtmZone>) -> Result<Self> {
        let zone = zone.unwrap_or_else(|| dataio::anchor_zone(records));
        let (posits, order) = dataio::to_posits(records, zone)?;
        tracker::check_sorted(&posits)?;
        let truth = order.iter().map(|i| records[*i].track_id).collect::<Option<Vec<u64>>>();
        Ok(Self { posits, order, truth, zone })
    }

    pub fn require_truth(&self) -> Result<&[u64]> {
        self.truth.as_deref().ok_or_else(|| Error::InvalidRecord("ground-truth track ids are required".into()))
    }

    pub fn keys(&self) -> Vec<PositKey> {
        self.posits.iter().map(PositKey::from).collect()
    }

    /// Labels in source-record order.
    pub fn labels_in_record_order(&self, labels: &[u32]) -> Vec<u64> {
        let mut out = vec![0u64; labels.len()];
        for (pos, rec) in self.order.iter().enumerate() {
            out[*rec] = u64::from(labels[pos]);
        }
        out
    }
}

pub fn examples(queries: &[RawQuery], schema: &FeatureSchema) -> Vec<Example> {
    queries
        .iter()
        .map(|q| {
            let input = assemble_input(schema, &q.slots);
            Example { input: input.values, mask: input.mask, label: q.label }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub report: TrainReport,
    /// Argmax classification report on the validation examples.
    pub validation: ClassReport,
    pub n_train: usize,
    pub n_validation: usize,
}

/// Teacher-forced queries from every labeled training stream, a feature
/// schema fitted on them, a trained network, and temperature calibration on
/// the validation streams (or a held-out fraction when none are given).
pub fn fit_classifier(
    train: &[&Stream],
    validation: &[&Stream],
    pipeline: &PipelineConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut queries = Vec::new();
    for s in train {
        queries.extend(tracker::teacher_forced(&s.posits, s.require_truth()?, pipeline)?);
    }
    let mut val_queries = Vec::new();
    for s in validation {
        val_queries.extend(tracker::teacher_forced(&s.posits, s.require_truth()?, pipeline)?);
    }
    let k = pipeline.k();
    let schema = FeatureSchema::fit(k, queries.iter().flat_map(|q| q.slots.iter()));
    let train_ex = examples(&queries, &schema);
    let val_ex = examples(&val_queries, &schema);
    let given = (!val_ex.is_empty()).then_some(val_ex.as_slice());
    let (mut model, report) = classifier::train(&train_ex, given, cfg, schema.fingerprint())?;
    let held: Vec<Example>;
    let calib: &[Example] = match given {
        Some(v) => v,
        None => {
            held = classifier::held_out(&train_ex, cfg);
            &held
        }
    };
    model.temperature = classifier::calibrate(&model, calib);
    let predicted: Vec<usize> = calib
        .iter()
        .map(|e| model.forward(&e.input).map(|l| classifier::argmax_masked(&l, &e.mask)))
        .collect::<Result<_>>()?;
    let truth: Vec<usize> = calib.iter().map(|e| e.label).collect();
    let validation = evaluation::classification_report(&predicted, &truth, k);
    let n_train = report.n_train;
    let n_validation = report.n_valid;
    Ok(TrainOutcome { classifier: Classifier::new(model, schema)?, report, validation, n_train, n_validation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hybrid,
    Oracle,
    Greedy,
    Cbtr,
    Atd,
    KfCv,
    KfCtrv,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Hybrid => "hybrid",
            Method::Oracle => "oracle",
            Method::Greedy => "greedy",
            Method::Cbtr => "cbtr",
            Method::Atd => "atd",
            Method::KfCv => "kf-cv",
            Method::KfCtrv => "kf-ctrv",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub cbtr: CbtrConfig,
    pub atd: AtdConfig,
    pub kf: KfConfig,
}

/// Runs one method over a stream. The hybrid method needs a classifier and
/// the oracle needs ground truth.
pub fn relabel(
    stream: &Stream,
    method: Method,
    classifier: Option<&Classifier>,
    pipeline: &PipelineConfig,
    baselines: &BaselineConfig,
) -> Result<LabeledStream> {
    let posits = &stream.posits;
    match method {
        Method::Hybrid => {
            let c = classifier.ok_or_else(|| Error::Config("the hybrid method needs a model".into()))?;
            if c.k() != pipeline.k() {
                return Err(Error::Config(format!("model was trained for k = {}, screen uses k = {}", c.k(), pipeline.k())));
            }
            tracker::run(posits, &Decider::Classifier(c), pipeline)
        }
        Method::Oracle => {
            let index = TruthIndex::new(posits, stream.require_truth()?);
            tracker::run(posits, &Decider::Oracle(&index), pipeline)
        }
        Method::Greedy => tracker::run(posits, &Decider::Greedy, pipeline),
        Method::Cbtr => {
            let lazy = CbtrLazy { posits, cfg: baselines.cbtr };
            baselines::cbtr_link(&lazy, posits, &baselines.cbtr)
        }
        Method::Atd => Ok(baselines::atd_link(posits, &baselines.atd)?.0),
        Method::KfCv => Ok(baselines::kf_nn_track(posits, KfModel::Cv, &baselines.kf)?.0),
        Method::KfCtrv => Ok(baselines::kf_nn_track(posits, KfModel::Ctrv, &baselines.kf)?.0),
    }
}

/// Posit accuracy of `labels` against the stream's ground truth.
pub fn score(stream: &Stream, labels: &[u32], opts: ScoreOptions) -> Result<PositScore> {
    evaluation::posit_accuracy(&stream.keys(), labels, stream.require_truth()?, opts)
}
