//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. The MNIST criteria need the IDX files under
//! `data/mnist` (or `$ANYCBM_DATA_DIR`); without them they fail.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use anycbm::anycbm::{identity_roundtrip_suite, train_anycbm, AnyCbmConfig};
use anycbm::blackbox::{train_blackbox, BlackBoxConfig};
use anycbm::data::{mnist_dir, split, synth_concepts, SplitSpec};
use anycbm::eval::roc_auc;
use anycbm::experiments::{
    interventions_report, load_splits, table1_report, table2_data, table2_report, train_seeds, RunConfig, SeedModels,
    Splits, Summary, MODEL_ANYCBM, MODEL_BLACKBOX, MODEL_CBM,
};
use anycbm::nn::grad_check_suite;
use anycbm::rng::seeded;
use anycbm::train::TrainConfig;
use anycbm::TrainingMode;

const TABLE1_BUDGET: Duration = Duration::from_secs(45 * 60);
const POINT: f64 = 0.01;

#[derive(Default)]
struct Outcomes {
    passed: usize,
    failed: Vec<String>,
}

impl Outcomes {
    fn record(&mut self, name: &str, ok: bool, detail: impl AsRef<str>) {
        println!("{} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(name.to_string());
        }
    }

    fn at_least(&mut self, name: &str, value: f64, bound: f64) {
        self.record(name, value >= bound, format!("{value:.4} (need >= {bound})"));
    }

    fn within(&mut self, name: &str, a: f64, b: f64, tol: f64) {
        let gap = (a - b).abs();
        self.record(name, gap <= tol, format!("|{a:.4} - {b:.4}| = {gap:.4} (need <= {tol})"));
    }
}

fn main() {
    let mut out = Outcomes::default();
    numerical_core(&mut out);
    theorem_shadows(&mut out);

    let data_dir = mnist_dir(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let cfg = RunConfig {
        data_dir,
        ..RunConfig::default()
    };
    match load_splits(&cfg) {
        Ok(splits) => {
            let (models, summary) = table1(&mut out, &cfg, &splits);
            same_seed_identity(&mut out, &cfg, &splits, &models[0]);
            figure2(&mut out, &cfg, &splits, &models, &summary);
            drop(models);
            table2(&mut out, &cfg);
        }
        Err(e) => out.record("mnist data", false, format!("cannot load MNIST: {e}")),
    }

    println!("{} passed, {} failed", out.passed, out.failed.len());
    if !out.failed.is_empty() {
        println!("failed: {}", out.failed.join(", "));
        std::process::exit(1);
    }
}

fn numerical_core(out: &mut Outcomes) {
    let outcomes = grad_check_suite(20, 0, 1e-5).expect("gradient check runs");
    let worst = outcomes.iter().map(|o| o.worst).fold(0.0, f64::max);
    let all = outcomes.iter().all(|o| o.nets == 20 && o.worst < 1e-4);
    out.record(
        "gradient check",
        all,
        format!("{} layer/loss combos x 20 nets, worst rel-err {worst:.2e} (need < 1e-4)", outcomes.len()),
    );

    let mut rng = seeded(0, 0);
    let mut mismatches = 0;
    for _ in 0..200 {
        let size = rng.random_range(2..=50);
        // Coarse scores force ties; fine ones are mostly distinct.
        let levels = *[3u32, 10, 1000].choose(&mut rng).unwrap();
        let scores: Vec<f64> = (0..size).map(|_| f64::from(rng.random_range(0..levels)) / 7.0).collect();
        let mut labels: Vec<bool> = (0..size).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        labels.shuffle(&mut rng);
        if roc_auc(&scores, &labels).unwrap() != pairwise_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    out.record("roc-auc oracle", mismatches == 0, format!("{mismatches} of 200 instances differ"));
}

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn theorem_shadows(out: &mut Outcomes) {
    let data = synth_concepts(4, 2000, 0).unwrap();
    let (train, val, test) = split(&data, SplitSpec::new(0.7, 0.15, 0.15, 0)).unwrap();
    let bb_cfg = BlackBoxConfig {
        hidden: vec![32, 16, 8],
        tap_l: 1,
        tap_q: 1,
        train: TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        },
    };
    let (bb, _) = train_blackbox(&train, &val, &bb_cfg).unwrap();
    let before = bb.to_checkpoint().to_bytes();
    let heads_cfg = AnyCbmConfig {
        train: TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        },
        ..AnyCbmConfig::default()
    };
    let (heads, _) = train_anycbm(&bb, &train, &val, &heads_cfg, TrainingMode::Joint).unwrap();
    let report = identity_roundtrip_suite(&bb, &heads, test.features().view()).unwrap();
    out.record(
        "identity-tap round trip",
        report.relative < 0.10,
        format!(
            "mse {:.4} / energy {:.4} = {:.2}% (need < 10%)",
            report.roundtrip_mse,
            report.input_energy,
            100.0 * report.relative
        ),
    );
    let min = report.min_vertex_distance.unwrap_or(0.0);
    out.record(
        "vertex images distinct",
        report.vertices == 16 && min > 0.0,
        format!("{} vertices, min pairwise distance {min:.4} (need > 0)", report.vertices),
    );

    let mut unchanged = bb.to_checkpoint().to_bytes() == before;
    for mode in [TrainingMode::Independent, TrainingMode::Sequential] {
        train_anycbm(&bb, &train, &val, &heads_cfg, mode).unwrap();
        unchanged &= bb.to_checkpoint().to_bytes() == before;
    }
    out.record(
        "frozen black box untouched",
        unchanged,
        "checkpoint bytes identical before and after joint, independent and sequential head training",
    );
}

fn task(summary: &Summary, model: &str, dataset: &str) -> f64 {
    summary.group(model, dataset, None).expect("summary group").task_mean
}

fn concept(summary: &Summary, model: &str, dataset: &str) -> f64 {
    summary
        .group(model, dataset, None)
        .and_then(|g| g.concept_mean)
        .expect("concept score")
}

fn table1(out: &mut Outcomes, cfg: &RunConfig, splits: &Splits) -> (Vec<SeedModels>, Summary) {
    let start = Instant::now();
    let models = train_seeds(cfg, splits, splits).unwrap();
    let report = table1_report(cfg, &models, splits).unwrap();
    let elapsed = start.elapsed();
    print!("{}", report.table);
    let s = &report.summary;
    let bb = task(s, MODEL_BLACKBOX, "grey");
    let any = task(s, MODEL_ANYCBM, "grey");
    out.at_least("table1 black box task", bb, 0.990);
    out.at_least("table1 cbm task", task(s, MODEL_CBM, "grey"), 0.990);
    out.at_least("table1 cbm concept", concept(s, MODEL_CBM, "grey"), 0.990);
    out.at_least("table1 anycbm task", any, 0.990);
    out.within("table1 anycbm task vs black box", any, bb, POINT);
    out.at_least("table1 anycbm concept", concept(s, MODEL_ANYCBM, "grey"), 0.975);
    out.record(
        "table1 runtime",
        elapsed < TABLE1_BUDGET && cfg.seeds.len() == 5,
        format!("{} seeds in {:.1?} (need < 45 min)", cfg.seeds.len(), elapsed),
    );
    (models, report.summary)
}

fn same_seed_identity(out: &mut Outcomes, cfg: &RunConfig, splits: &Splits, first: &SeedModels) {
    let again = RunConfig {
        seeds: vec![first.seed],
        parallel: !cfg.parallel,
        ..cfg.clone()
    };
    let rerun = &train_seeds(&again, splits, splits).unwrap()[0];
    let same = rerun.blackbox.to_checkpoint().to_bytes() == first.blackbox.to_checkpoint().to_bytes()
        && rerun.cbm.to_checkpoint().to_bytes() == first.cbm.to_checkpoint().to_bytes()
        && rerun.heads.to_checkpoint().to_bytes() == first.heads.to_checkpoint().to_bytes();
    out.record(
        "same-seed training byte-identical",
        same,
        format!("seed {} black box, CBM and heads retrained and compared", first.seed),
    );
}

fn figure2(out: &mut Outcomes, cfg: &RunConfig, splits: &Splits, models: &[SeedModels], clean: &Summary) {
    let report = interventions_report(cfg, models, splits).unwrap();
    print!("{}", report.table);
    let k = splits.test.meta.k;
    let curve = |model: &str| -> Vec<f64> {
        (0..=k)
            .map(|m| report.summary.group(model, "grey", Some(m)).expect("curve point").task_mean)
            .collect()
    };
    let mut ends = Vec::new();
    for (model, label) in [(MODEL_ANYCBM, "anycbm"), (MODEL_CBM, "cbm")] {
        let points = curve(model);
        let worst_drop = points.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
        out.record(
            &format!("figure2 {label} non-decreasing"),
            worst_drop <= 0.005,
            format!("{:.4} -> {:.4}, largest step down {:.4} (need <= 0.005)", points[0], points[k], worst_drop.max(0.0)),
        );
        let full = points[k];
        out.within(&format!("figure2 {label} full intervention vs clean"), full, task(clean, model, "grey"), POINT);
        ends.push(full);
    }
    out.within("figure2 endpoints agree", ends[0], ends[1], POINT);
}

fn table2(out: &mut Outcomes, cfg: &RunConfig) {
    let (rgb, grey) = table2_data(cfg).unwrap();
    let models = train_seeds(cfg, &rgb, &grey).unwrap();
    let report = table2_report(&models, &rgb, &grey).unwrap();
    print!("{}", report.table);
    let s = &report.summary;
    out.within(
        "table2 anycbm rgb task vs black box",
        task(s, MODEL_ANYCBM, "rgb"),
        task(s, MODEL_BLACKBOX, "rgb"),
        POINT,
    );
    out.at_least("table2 anycbm concept grey", concept(s, MODEL_ANYCBM, "grey"), 0.90);
    out.at_least("table2 anycbm concept rgb", concept(s, MODEL_ANYCBM, "rgb"), 0.85);
    let (on_grey, on_rgb) = (task(s, MODEL_CBM, "grey"), task(s, MODEL_CBM, "rgb"));
    out.record(
        "table2 cbm degrades on rgb",
        on_grey - on_rgb >= 0.10,
        format!("grey {on_grey:.4} - rgb {on_rgb:.4} = {:.4} (need >= 0.10)", on_grey - on_rgb),
    );
}
