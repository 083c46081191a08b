//! Multi-config comparison over shared seeds, and single-axis ablations.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use avvp_core::data::{generate_dataset, load_dataset, Dataset};
use avvp_core::leap::BlockSelect;
use avvp_core::metrics::LevelScores;

use crate::config::{DatasetSource, ExperimentConfig, LabelEmbeddingSource};
use crate::evaluate::{evaluate_model, EvaluationSet};
use crate::report::{fmt_metric, render_table};
use crate::train::train;
use crate::HarnessError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedConfig {
    pub name: String,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub seeds: Vec<u64>,
    pub configs: Vec<NamedConfig>,
}

impl CompareConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.configs.len() < 2 {
            return Err(HarnessError::Validation(
                "compare requires at least two configs".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Validation(
                "compare requires at least one seed".into(),
            ));
        }
        let first = &self.configs[0].config.dataset;
        for named in &self.configs[1..] {
            if named.config.dataset != *first {
                return Err(HarnessError::Validation(format!(
                    "config {:?} uses a different dataset; compared configs must share one",
                    named.name
                )));
            }
        }
        for named in &self.configs {
            named.config.validate()?;
        }
        Ok(())
    }
}

pub fn resolve_dataset(source: &DatasetSource) -> Result<Dataset, HarnessError> {
    match source {
        DatasetSource::Generate { config } => Ok(generate_dataset(config)?),
        DatasetSource::Load { dir } => Ok(load_dataset(dir)?),
    }
}

/// Mean of per-seed test evaluations for one config. Subset means are
/// absent when the subset is empty on any seed's evaluation.
#[derive(Clone, Debug)]
pub struct ConfigSummary {
    pub name: String,
    pub per_seed: Vec<(u64, EvaluationSet)>,
    pub mean_all_segment: LevelScores,
    pub mean_all_event: LevelScores,
    pub mean_overlapping_segment: Option<LevelScores>,
    pub mean_overlapping_event: Option<LevelScores>,
    pub mean_non_overlapping_segment: Option<LevelScores>,
    pub mean_non_overlapping_event: Option<LevelScores>,
}

fn mean_scores(items: &[LevelScores]) -> LevelScores {
    let n = items.len() as f64;
    LevelScores {
        audio: items.iter().map(|s| s.audio).sum::<f64>() / n,
        visual: items.iter().map(|s| s.visual).sum::<f64>() / n,
        audio_visual: items.iter().map(|s| s.audio_visual).sum::<f64>() / n,
        type_at_av: items.iter().map(|s| s.type_at_av).sum::<f64>() / n,
        event_at_av: items.iter().map(|s| s.event_at_av).sum::<f64>() / n,
    }
}

fn scores_json(s: &LevelScores) -> Value {
    json!({
        "audio": s.audio,
        "visual": s.visual,
        "audio_visual": s.audio_visual,
        "type_at_av": s.type_at_av,
        "event_at_av": s.event_at_av,
        "average": s.average(),
    })
}

pub struct CompareOutcome {
    pub summaries: Vec<ConfigSummary>,
    pub json: Value,
    pub table: String,
}

/// Train every config on every seed (same dataset throughout) and tabulate
/// test metrics: per-seed values, means, and deltas against the first config.
pub fn compare(cc: &CompareConfig) -> Result<CompareOutcome, HarnessError> {
    cc.validate()?;
    let dataset = resolve_dataset(&cc.configs[0].config.dataset)?;

    let mut summaries = Vec::with_capacity(cc.configs.len());
    for named in &cc.configs {
        let mut per_seed = Vec::with_capacity(cc.seeds.len());
        for &seed in &cc.seeds {
            let mut config = named.config.clone();
            config.seed = seed;
            let outcome = train(&config, &dataset)?;
            let evaluation = evaluate_model(&outcome.best_model, &dataset.test, config.threshold);
            per_seed.push((seed, evaluation));
        }
        let all_segment: Vec<LevelScores> = per_seed.iter().map(|(_, e)| e.all.segment).collect();
        let all_event: Vec<LevelScores> = per_seed.iter().map(|(_, e)| e.all.event).collect();
        let subset_mean = |pick: &dyn Fn(&EvaluationSet) -> Option<LevelScores>| {
            let scores: Vec<LevelScores> = per_seed.iter().filter_map(|(_, e)| pick(e)).collect();
            (scores.len() == per_seed.len()).then(|| mean_scores(&scores))
        };
        summaries.push(ConfigSummary {
            name: named.name.clone(),
            mean_all_segment: mean_scores(&all_segment),
            mean_all_event: mean_scores(&all_event),
            mean_overlapping_segment: subset_mean(&|e| e.overlapping.map(|r| r.segment)),
            mean_overlapping_event: subset_mean(&|e| e.overlapping.map(|r| r.event)),
            mean_non_overlapping_segment: subset_mean(&|e| e.non_overlapping.map(|r| r.segment)),
            mean_non_overlapping_event: subset_mean(&|e| e.non_overlapping.map(|r| r.event)),
            per_seed,
        });
    }

    let json = compare_json(cc, &summaries);
    let table = compare_table(&summaries);
    Ok(CompareOutcome {
        summaries,
        json,
        table,
    })
}

fn compare_json(cc: &CompareConfig, summaries: &[ConfigSummary]) -> Value {
    let baseline = &summaries[0];
    let results: Vec<Value> = summaries
        .iter()
        .map(|s| {
            let per_seed: Vec<Value> = s
                .per_seed
                .iter()
                .map(|(seed, evaluation)| json!({"seed": seed, "test": evaluation.to_json()}))
                .collect();
            let opt = |v: &Option<LevelScores>| match v {
                Some(scores) => scores_json(scores),
                None => Value::Null,
            };
            json!({
                "name": s.name,
                "per_seed": per_seed,
                "mean": {
                    "all_segment": scores_json(&s.mean_all_segment),
                    "all_event": scores_json(&s.mean_all_event),
                    "overlapping_segment": opt(&s.mean_overlapping_segment),
                    "overlapping_event": opt(&s.mean_overlapping_event),
                    "non_overlapping_segment": opt(&s.mean_non_overlapping_segment),
                    "non_overlapping_event": opt(&s.mean_non_overlapping_event),
                },
                "delta_event_average_vs_first":
                    s.mean_all_event.average() - baseline.mean_all_event.average(),
            })
        })
        .collect();
    json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "seeds": cc.seeds,
        "config_hashes": cc.configs.iter()
            .map(|n| json!({"name": n.name, "hash": n.config.hash()}))
            .collect::<Vec<_>>(),
        "results": results,
    })
}

fn compare_table(summaries: &[ConfigSummary]) -> String {
    let headers: Vec<String> = [
        "config",
        "seg A",
        "seg V",
        "seg AV",
        "seg Type@AV",
        "seg Event@AV",
        "evt A",
        "evt V",
        "evt AV",
        "evt Type@AV",
        "evt Event@AV",
        "evt Avg",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.name.clone(),
                fmt_metric(s.mean_all_segment.audio),
                fmt_metric(s.mean_all_segment.visual),
                fmt_metric(s.mean_all_segment.audio_visual),
                fmt_metric(s.mean_all_segment.type_at_av),
                fmt_metric(s.mean_all_segment.event_at_av),
                fmt_metric(s.mean_all_event.audio),
                fmt_metric(s.mean_all_event.visual),
                fmt_metric(s.mean_all_event.audio_visual),
                fmt_metric(s.mean_all_event.type_at_av),
                fmt_metric(s.mean_all_event.event_at_av),
                fmt_metric(s.mean_all_event.average()),
            ]
        })
        .collect();
    render_table(&headers, &rows)
}

// ── Ablation ─────────────────────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum AblationAxis {
    LeapBlocks { values: Vec<usize> },
    Lambda { values: Vec<f64> },
    BlockSelect { values: Vec<BlockSelect> },
    LabelEmbeddings { values: Vec<LabelEmbeddingSource> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblateConfig {
    pub base: ExperimentConfig,
    #[serde(flatten)]
    pub axis: AblationAxis,
}

/// Expand the axis into named configs and run them as a comparison on the
/// base seed.
pub fn ablate(ac: &AblateConfig) -> Result<CompareOutcome, HarnessError> {
    let variants: Vec<NamedConfig> = match &ac.axis {
        AblationAxis::LeapBlocks { values } => values
            .iter()
            .map(|&n| {
                let mut config = ac.base.clone();
                config.leap_blocks = n;
                NamedConfig {
                    name: format!("blocks={n}"),
                    config,
                }
            })
            .collect(),
        AblationAxis::Lambda { values } => values
            .iter()
            .map(|&lambda| {
                let mut config = ac.base.clone();
                config.lambda = lambda;
                NamedConfig {
                    name: format!("lambda={lambda}"),
                    config,
                }
            })
            .collect(),
        AblationAxis::BlockSelect { values } => values
            .iter()
            .map(|&select| {
                let mut config = ac.base.clone();
                config.block_select = select;
                NamedConfig {
                    name: format!("select={select:?}").to_lowercase(),
                    config,
                }
            })
            .collect(),
        AblationAxis::LabelEmbeddings { values } => values
            .iter()
            .enumerate()
            .map(|(i, source)| {
                let mut config = ac.base.clone();
                config.label_embeddings = source.clone();
                let name = match source {
                    LabelEmbeddingSource::Seeded => "embeddings=seeded".to_string(),
                    LabelEmbeddingSource::File { .. } => format!("embeddings=file{i}"),
                };
                NamedConfig { name, config }
            })
            .collect(),
    };
    if variants.len() < 2 {
        return Err(HarnessError::Validation(
            "ablation needs at least two values".into(),
        ));
    }
    compare(&CompareConfig {
        seeds: vec![ac.base.seed],
        configs: variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DecoderKind;
    use avvp_core::data::DatasetConfig;

    fn tiny_compare() -> CompareConfig {
        let data_config = DatasetConfig {
            num_classes: 3,
            segments: 5,
            d_in_audio: 5,
            d_in_visual: 6,
            train_videos: 6,
            val_videos: 3,
            test_videos: 4,
            ..DatasetConfig::default()
        };
        let mut leap = ExperimentConfig::leap_defaults(2);
        leap.hidden = 6;
        leap.epochs = 1;
        leap.batch_size = 4;
        leap.dataset = DatasetSource::Generate {
            config: data_config,
        };
        let mut mmil = leap.clone();
        mmil.decoder = DecoderKind::Mmil;
        CompareConfig {
            seeds: vec![2],
            configs: vec![
                NamedConfig {
                    name: "leap".into(),
                    config: leap,
                },
                NamedConfig {
                    name: "mmil".into(),
                    config: mmil,
                },
            ],
        }
    }

    #[test]
    fn identical_configs_have_zero_delta() {
        let mut cc = tiny_compare();
        cc.configs[1] = NamedConfig {
            name: "leap-again".into(),
            config: cc.configs[0].config.clone(),
        };
        let outcome = compare(&cc).unwrap();
        let delta = outcome.json["results"][1]["delta_event_average_vs_first"]
            .as_f64()
            .unwrap();
        assert_eq!(delta, 0.0);
    }

    #[test]
    fn compare_emits_table_and_per_seed_results() {
        let cc = tiny_compare();
        let outcome = compare(&cc).unwrap();
        assert_eq!(outcome.summaries.len(), 2);
        assert!(outcome.table.contains("leap"));
        assert!(outcome.table.contains("mmil"));
        assert_eq!(
            outcome.json["results"][0]["per_seed"]
                .as_array()
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn mismatched_datasets_rejected() {
        let mut cc = tiny_compare();
        if let DatasetSource::Generate { config } = &mut cc.configs[1].config.dataset {
            config.seed = 99;
        }
        assert!(matches!(cc.validate(), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn lambda_ablation_emits_one_row_per_value() {
        let base = tiny_compare().configs[0].config.clone();
        let ac = AblateConfig {
            base,
            axis: AblationAxis::Lambda {
                values: vec![0.5, 1.0, 2.0],
            },
        };
        let outcome = ablate(&ac).unwrap();
        assert_eq!(outcome.summaries.len(), 3);
        for (i, lambda) in ["0.5", "1", "2"].iter().enumerate() {
            assert_eq!(outcome.summaries[i].name, format!("lambda={lambda}"));
        }
    }
}
