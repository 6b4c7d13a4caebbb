//! Multi-seed experiment drivers behind the command-line tool.
//!
//! Each `run_*` function is a pure function of its [`RunConfig`]: the same
//! config and data give byte-identical CSV, summary and checkpoints.

mod config;
mod report;

use std::path::Path;

pub use config::{RunConfig, KEYS};
pub use report::{
    cell, markdown_table, read_csv, summarize, write_csv, Report, ResultRow, Summary, SummaryGroup, CSV_HEADER,
    MISSING,
};

use crate::anycbm::{anycbm_scores, train_anycbm, AnyCbmHeads};
use crate::blackbox::{train_blackbox, BlackBoxModel};
use crate::cbm::{cbm_scores, train_cbm, CbmModel};
use crate::data::{
    colorize_rgb, grey_as_rgb, load_mnist_parity, split, synth_concepts, Dataset, SplitSpec, Variant,
};
use crate::eval::{intervention_curve, AnyCbmPair, ConceptFamilies, ConceptModel, NoiseProfile};
use crate::par::map_ordered;
use crate::{Error, Result};

pub const MODEL_BLACKBOX: &str = "blackbox";
pub const MODEL_CBM: &str = "cbm";
pub const MODEL_ANYCBM: &str = "anycbm";

/// Seeds for the fixed colorization of each split.
const RGB_SEEDS: (u64, u64, u64) = (100, 101, 102);

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    fn map(&self, f: impl Fn(&Dataset, u64) -> Result<Dataset>) -> Result<Splits> {
        Ok(Splits {
            train: f(&self.train, RGB_SEEDS.0)?,
            val: f(&self.val, RGB_SEEDS.1)?,
            test: f(&self.test, RGB_SEEDS.2)?,
        })
    }
}

/// Loads the base (grey or synthetic) splits. The MNIST training file is
/// split 55k/5k into train and validation with a fixed seed; the official
/// test file is the test set. Seeds vary model initialization only.
pub fn load_base_splits(cfg: &RunConfig) -> Result<Splits> {
    let splits = match cfg.dataset {
        Variant::Synthetic => {
            let data = synth_concepts(cfg.synth_k, cfg.synth_count, 0)?;
            let (train, val, test) = split(&data, SplitSpec::new(0.7, 0.15, 0.15, 0))?;
            Splits { train, val, test }
        }
        Variant::Grey | Variant::Rgb => {
            let mnist = load_mnist_parity(&cfg.data_dir)?;
            let (train, val, _) = split(&mnist.train, SplitSpec::new(11.0 / 12.0, 1.0 / 12.0, 0.0, 0))?;
            Splits {
                train,
                val,
                test: mnist.test,
            }
        }
    };
    Ok(Splits {
        train: splits.train.truncated(cfg.train_limit),
        val: splits.val,
        test: splits.test.truncated(cfg.test_limit),
    })
}

/// Splits for `cfg.dataset`, colorizing when it asks for rgb.
pub fn load_splits(cfg: &RunConfig) -> Result<Splits> {
    let base = load_base_splits(cfg)?;
    match cfg.dataset {
        Variant::Rgb => base.map(colorize_rgb),
        _ => Ok(base),
    }
}

/// The three models of one seed.
#[derive(Debug, Clone)]
pub struct SeedModels {
    pub seed: u64,
    pub blackbox: BlackBoxModel,
    pub cbm: CbmModel,
    pub heads: AnyCbmHeads,
}

impl SeedModels {
    /// Writes `blackbox.acbm`, `cbm.acbm` and `anycbm.acbm` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.blackbox.to_checkpoint().save(dir.join("blackbox.acbm"))?;
        self.cbm.to_checkpoint().save(dir.join("cbm.acbm"))?;
        self.heads.to_checkpoint().save(dir.join("anycbm.acbm"))
    }
}

/// Trains one black box on `bb_data`, and a CBM plus AnyCBM heads on
/// `concept_data`, for every seed.
pub fn train_seeds(cfg: &RunConfig, bb_data: &Splits, concept_data: &Splits) -> Result<Vec<SeedModels>> {
    map_ordered(&cfg.seeds, cfg.execution(), |&seed| {
        let start = std::time::Instant::now();
        let (blackbox, _) = train_blackbox(&bb_data.train, &bb_data.val, &cfg.blackbox_config(seed))?;
        let (cbm, _) = train_cbm(&concept_data.train, &concept_data.val, &cfg.cbm_config(seed), cfg.cbm_mode)?;
        let (heads, _) = train_anycbm(
            &blackbox,
            &concept_data.train,
            &concept_data.val,
            &cfg.anycbm_config(seed),
            cfg.anycbm_mode,
        )?;
        log::info!("seed {seed}: trained in {:.1?}", start.elapsed());
        Ok(SeedModels {
            seed,
            blackbox,
            cbm,
            heads,
        })
    })
    .into_iter()
    .collect()
}

fn score_row(model: &str, dataset: &str, seed: u64, scores: (f64, Option<f64>)) -> ResultRow {
    ResultRow {
        model: model.to_string(),
        dataset: dataset.to_string(),
        sigma: None,
        num_groups: None,
        seed,
        task_auc: scores.0,
        concept_auc: scores.1,
    }
}

/// Clean task and concept scores of every model on each named test set.
pub fn score_rows(models: &[SeedModels], tests: &[(&str, &Dataset)]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for model in [MODEL_BLACKBOX, MODEL_CBM, MODEL_ANYCBM] {
        for &(name, data) in tests {
            for m in models {
                let scores = match model {
                    MODEL_BLACKBOX => (m.blackbox.task_auc(data)?, None),
                    MODEL_CBM => {
                        let (t, c) = cbm_scores(&m.cbm, data)?;
                        (t, Some(c))
                    }
                    _ => {
                        let (t, c) = anycbm_scores(&m.blackbox, &m.heads, data)?;
                        (t, Some(c))
                    }
                };
                rows.push(score_row(model, name, m.seed, scores));
            }
        }
    }
    Ok(rows)
}

const DISPLAY_NAMES: [(&str, &str); 3] = [
    (MODEL_BLACKBOX, "Black box"),
    (MODEL_CBM, "CBM"),
    (MODEL_ANYCBM, "Black box + AnyCBM"),
];

pub fn render_table1(summary: &Summary) -> String {
    let body: Vec<Vec<String>> = DISPLAY_NAMES
        .iter()
        .filter_map(|&(key, label)| {
            let g = summary.groups.iter().find(|g| g.model == key)?;
            Some(vec![
                label.to_string(),
                cell(Some(g.task_mean), Some(g.task_stderr)),
                cell(g.concept_mean, g.concept_stderr),
            ])
        })
        .collect();
    markdown_table(&["Model", "Task ROC-AUC", "Concept ROC-AUC"], &body)
}

pub fn render_table2(summary: &Summary) -> String {
    let body: Vec<Vec<String>> = DISPLAY_NAMES
        .iter()
        .map(|&(key, label)| {
            let mut row = vec![label.to_string()];
            for dataset in ["rgb", "grey"] {
                match summary.group(key, dataset, None) {
                    Some(g) => {
                        row.push(cell(Some(g.task_mean), Some(g.task_stderr)));
                        row.push(cell(g.concept_mean, g.concept_stderr));
                    }
                    None => row.extend([MISSING.to_string(), MISSING.to_string()]),
                }
            }
            row
        })
        .collect();
    markdown_table(&["Model", "RGB task", "RGB concept", "Grey task", "Grey concept"], &body)
}

pub fn render_curves(summary: &Summary) -> String {
    let max = summary.groups.iter().filter_map(|g| g.num_groups).max().unwrap_or(0);
    let body: Vec<Vec<String>> = (0..=max)
        .map(|m| {
            let mut row = vec![m.to_string()];
            for model in [MODEL_ANYCBM, MODEL_CBM] {
                let g = summary
                    .groups
                    .iter()
                    .find(|g| g.model == model && g.num_groups == Some(m));
                row.push(g.map_or(MISSING.to_string(), |g| cell(Some(g.task_mean), Some(g.task_stderr))));
            }
            row
        })
        .collect();
    markdown_table(&["Groups intervened", "AnyCBM task", "CBM task"], &body)
}

/// Table 1: black box, CBM and AnyCBM trained and tested on one dataset.
pub fn table1_report(cfg: &RunConfig, models: &[SeedModels], splits: &Splits) -> Result<Report> {
    let rows = score_rows(models, &[(&cfg.dataset.to_string(), &splits.test)])?;
    Report::new("table1", rows, render_table1)
}

pub fn run_table1(cfg: &RunConfig) -> Result<(Report, Vec<SeedModels>)> {
    let splits = load_splits(cfg)?;
    let models = train_seeds(cfg, &splits, &splits)?;
    Ok((table1_report(cfg, &models, &splits)?, models))
}

/// The rgb splits and their grey-as-rgb twins used by Table 2.
pub fn table2_data(cfg: &RunConfig) -> Result<(Splits, Splits)> {
    if cfg.dataset == Variant::Synthetic {
        return Err(Error::Config("table2 needs MNIST images, not the synthetic dataset".into()));
    }
    let grey = load_base_splits(&RunConfig {
        dataset: Variant::Grey,
        ..cfg.clone()
    })?;
    Ok((grey.map(colorize_rgb)?, grey.map(|d, _| grey_as_rgb(d))?))
}

/// Table 2: black box trained on rgb; CBM and AnyCBM heads trained on grey
/// images replicated to three channels; everything scored on both.
pub fn table2_report(models: &[SeedModels], rgb: &Splits, grey: &Splits) -> Result<Report> {
    let rows = score_rows(models, &[("rgb", &rgb.test), ("grey", &grey.test)])?;
    Report::new("table2", rows, render_table2)
}

pub fn run_table2(cfg: &RunConfig) -> Result<(Report, Vec<SeedModels>)> {
    let (rgb, grey) = table2_data(cfg)?;
    let models = train_seeds(cfg, &rgb, &grey)?;
    Ok((table2_report(&models, &rgb, &grey)?, models))
}

/// Intervention curves for AnyCBM and CBM: the models of seed `s` are
/// perturbed and intervened on with seed `s`.
pub fn interventions_report(cfg: &RunConfig, models: &[SeedModels], splits: &Splits) -> Result<Report> {
    let families = ConceptFamilies::singletons(splits.test.meta.k);
    let dataset = cfg.dataset.to_string();
    let per_seed = map_ordered(models, cfg.execution(), |m| -> Result<Vec<ResultRow>> {
        let pair = AnyCbmPair::new(&m.blackbox, &m.heads, cfg.noise_layer)?;
        let mut rows = curve_rows(MODEL_ANYCBM, &dataset, &pair, cfg, m.seed, &splits.train, &splits.test, &families)?;
        rows.extend(curve_rows(MODEL_CBM, &dataset, &m.cbm, cfg, m.seed, &splits.train, &splits.test, &families)?);
        Ok(rows)
    });
    let mut rows: Vec<ResultRow> = per_seed.into_iter().collect::<Result<Vec<_>>>()?.concat();
    // Model-major order so the CSV reads as two curves.
    rows.sort_by_key(|r| (r.model != MODEL_ANYCBM, r.num_groups, r.seed));
    Report::new("interventions", rows, render_curves)
}

#[allow(clippy::too_many_arguments)]
fn curve_rows<M: ConceptModel>(
    name: &str,
    dataset: &str,
    model: &M,
    cfg: &RunConfig,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
    families: &ConceptFamilies,
) -> Result<Vec<ResultRow>> {
    let profile = NoiseProfile::from_activations(model.site_activations(train.features().view())?.view())?;
    let curve = intervention_curve(model, test, families, &profile, cfg.sigma, &[seed], cfg.execution())?;
    Ok(curve
        .rows
        .into_iter()
        .map(|r| ResultRow {
            model: name.to_string(),
            dataset: dataset.to_string(),
            sigma: Some(cfg.sigma),
            num_groups: Some(r.num_groups),
            seed: r.seed,
            task_auc: r.task_auc,
            concept_auc: Some(r.concept_auc),
        })
        .collect())
}

pub fn run_interventions(cfg: &RunConfig) -> Result<(Report, Vec<SeedModels>)> {
    let splits = load_splits(cfg)?;
    let models = train_seeds(cfg, &splits, &splits)?;
    Ok((interventions_report(cfg, &models, &splits)?, models))
}

/// Writes a report, the effective config, and each seed's checkpoints
/// under `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, report: &Report, models: &[SeedModels]) -> Result<()> {
    report.write(dir)?;
    std::fs::write(dir.join("config.txt"), cfg.to_kv())?;
    for m in models {
        m.save(&dir.join(format!("seed{}", m.seed)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig {
            dataset: Variant::Synthetic,
            seeds: vec![0, 1],
            synth_count: 400,
            ..RunConfig::default()
        };
        for (k, v) in [
            ("bb.hidden", "16,12,8"),
            ("bb.epochs", "2"),
            ("cbm.g_hidden", "16,12"),
            ("cbm.f_hidden", "8"),
            ("cbm.epochs", "2"),
            ("cbm.f_epochs", "2"),
            ("anycbm.c_hidden", "8"),
            ("anycbm.y_hidden", "8"),
            ("anycbm.epochs", "2"),
            ("batch_size", "32"),
        ] {
            cfg.set(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn table1_shape_and_dash() {
        let (report, models) = run_table1(&tiny()).unwrap();
        assert_eq!(models.len(), 2);
        assert_eq!(report.rows.len(), 6);
        assert_eq!(report.summary.groups.len(), 3);
        let lines: Vec<&str> = report.table.lines().collect();
        assert!(lines[2].starts_with("| Black box |") && lines[2].ends_with("| - |"), "{}", lines[2]);
        let csv = String::from_utf8(write_csv(&report.rows).unwrap()).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(",-"));
    }

    #[test]
    fn curves_have_one_row_per_prefix_and_seed() {
        let cfg = tiny();
        let (report, _) = run_interventions(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2 * 2 * (cfg.synth_k + 1));
        assert_eq!(report.summary.groups.len(), 2 * (cfg.synth_k + 1));
        assert_eq!(report.table.lines().count(), 2 + cfg.synth_k + 1);
    }

    #[test]
    fn runs_are_repeatable_and_execution_mode_free() {
        let cfg = tiny();
        let (a, _) = run_interventions(&cfg).unwrap();
        let (b, _) = run_interventions(&RunConfig {
            parallel: false,
            ..cfg
        })
        .unwrap();
        assert_eq!(write_csv(&a.rows).unwrap(), write_csv(&b.rows).unwrap());
        assert_eq!(a.summary.to_json().unwrap(), b.summary.to_json().unwrap());
    }

    #[test]
    fn table2_rejects_synthetic_data() {
        assert!(matches!(run_table2(&tiny()), Err(Error::Config(_))));
    }
}
