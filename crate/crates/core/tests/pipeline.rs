use std::path::Path;

use tiny_circuits::circuit::{count_active_gates, evaluate_batch};
use tiny_circuits::dataset::{load_csv, split, CsvOptions, LabelColumn, SplitFractions};
use tiny_circuits::emit::{emit_report, trace_csv};
use tiny_circuits::encoding::{encode_dataset, fit_encoder, make_output_codec, EncodedDataset, EncoderSpec, Strategy};
use tiny_circuits::evolve::{run, Hyperparameters, RunOptions, RunReport};
use tiny_circuits::fitness::{ScoringRules, Secondary};
use tiny_circuits::{circuit, OutputCodec, RawDataset};

fn iris() -> RawDataset {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
    load_csv(path, &LabelColumn::Name("species".into()), CsvOptions::default()).unwrap()
}

fn encoded(raw: &RawDataset, spec: EncoderSpec, seed: u64) -> EncodedDataset {
    let s = split(raw, SplitFractions::default(), seed, true).unwrap();
    let enc = fit_encoder(raw, &s.train, spec).unwrap();
    let codec: OutputCodec =
        make_output_codec(raw.n_classes(), None).unwrap().with_labels(raw.class_names.clone()).unwrap();
    encode_dataset(&enc, raw, &s, &codec).unwrap()
}

fn quick(seed: u64) -> Hyperparameters {
    Hyperparameters { n: 60, kappa: 80, max_generations: 600, seed, ..Default::default() }
}

#[test]
fn every_strategy_runs_end_to_end() {
    let raw = iris();
    for strategy in Strategy::ALL {
        for bits in [2, 4] {
            let data = encoded(&raw, EncoderSpec::new(strategy, bits).unwrap(), 1);
            let rr = run(&data, &quick(1), ScoringRules::default(), RunOptions::default()).unwrap();
            assert_eq!(rr.input_bits, data.n_inputs);
            assert_eq!(rr.output_bits, 2);
            assert!(rr.metrics.test.as_ref().unwrap().rho > 1.0 / 3.0 - 1e-9, "{strategy}/{bits}");
        }
    }
}

#[test]
fn report_metrics_match_the_returned_circuit() {
    let raw = iris();
    let data = encoded(&raw, EncoderSpec::default(), 2);
    let rr = run(&data, &quick(2), ScoringRules::default(), RunOptions::default()).unwrap();
    let test = rr.metrics.test.as_ref().unwrap();
    // recount accuracy from scalar outputs
    let outs = evaluate_batch(&rr.best_circuit, &rr.function_set, &data.test);
    let correct =
        outs.iter().zip(&data.test.labels).filter(|(bits, &label)| data.codec.decode_prediction(bits) == label).count();
    assert_eq!(test.accuracy, correct as f64 / data.test.len() as f64);
    assert_eq!(rr.active_gates, count_active_gates(&rr.best_circuit));
    assert_eq!(test.rows, 15 * 2);
}

#[test]
fn best_validation_fitness_only_rises() {
    let data = encoded(&iris(), EncoderSpec::default(), 3);
    let rr = run(&data, &quick(3), ScoringRules::default(), RunOptions::default()).unwrap();
    assert_eq!(rr.trace.len(), rr.generations_run + 1);
    for w in rr.trace.windows(2) {
        assert!(w[1].best_val_fitness >= w[0].best_val_fitness);
        assert!(w[1].parent_train_fitness >= w[0].parent_train_fitness);
    }
    assert_eq!(rr.metrics.validation.as_ref().unwrap().r, rr.trace.last().unwrap().best_val_fitness);
}

#[test]
fn worker_count_does_not_change_the_run() {
    let data = encoded(&iris(), EncoderSpec::default(), 4);
    let hp = quick(4);
    let a = run(&data, &hp, ScoringRules::default(), RunOptions { workers: 1 }).unwrap();
    for workers in [2, 4, 8] {
        let b = run(&data, &hp, ScoringRules::default(), RunOptions { workers }).unwrap();
        assert_eq!(a, b, "workers {workers}");
    }
}

#[test]
fn secondary_objectives_are_reported() {
    let data = encoded(&iris(), EncoderSpec::default(), 5);
    for (secondary, a) in [(Secondary::GateCount, 0.9), (Secondary::Nand2, 0.9), (Secondary::StuckAt, 0.95)] {
        let hp = Hyperparameters { secondary, reg_weight: a, ..quick(5) };
        let rr = run(&data, &hp, ScoringRules::default(), RunOptions::default()).unwrap();
        let m = &rr.metrics.train;
        assert!((m.r - (a * m.rho - (1.0 - a) * m.secondary)).abs() < 1e-12, "{secondary:?}");
        assert!((0.0..=1.0).contains(&m.secondary));
    }
}

#[test]
fn gate_penalty_shrinks_circuits() {
    let data = encoded(&iris(), EncoderSpec::default(), 6);
    let mut plain = 0;
    let mut penalised = 0;
    for seed in 0..4 {
        let base = Hyperparameters { n: 100, kappa: 200, max_generations: 1500, seed, ..Default::default() };
        plain += run(&data, &base, ScoringRules::default(), RunOptions::default()).unwrap().active_gates;
        let hp = Hyperparameters { secondary: Secondary::GateCount, reg_weight: 0.7, ..base };
        penalised += run(&data, &hp, ScoringRules::default(), RunOptions::default()).unwrap().active_gates;
    }
    assert!(penalised < plain, "{penalised} vs {plain}");
}

fn sample_report() -> RunReport {
    let data = encoded(&iris(), EncoderSpec::default(), 7);
    run(&data, &quick(7), ScoringRules::default(), RunOptions::default()).unwrap()
}

#[test]
fn run_report_round_trips_through_json() {
    let rr = sample_report();
    let text = serde_json::to_string(&rr).unwrap();
    let back: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rr);
    let circuit_text = circuit::serialize(&rr.best_circuit, &rr.function_set);
    assert_eq!(circuit::deserialize(&circuit_text).unwrap(), (rr.best_circuit.clone(), rr.function_set.clone()));
}

#[test]
fn text_report_and_trace() {
    let rr = sample_report();
    let report = emit_report(&rr);
    assert_eq!(report, emit_report(&rr));
    assert!(report.contains(&format!("input bits            {}", rr.input_bits)));
    assert!(report.contains("output bits           2"));
    assert!(report.contains(&format!("termination           {}", rr.termination_reason)));
    assert!(report.contains("lambda           4") && report.contains("kappa            80"));
    assert!(report.contains("setosa") && report.contains("test "));

    let csv = trace_csv(&rr.trace);
    assert_eq!(csv.lines().count(), rr.trace.len() + 1);
    assert_eq!(csv.lines().next().unwrap(), "generation,parent_train_fitness,best_val_fitness,active_gates");
    let last = csv.lines().last().unwrap();
    assert!(last.starts_with(&format!("{},", rr.generations_run)));
}
