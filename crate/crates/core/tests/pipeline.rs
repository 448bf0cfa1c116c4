use aia_core::analysis::{default_bin_edges, spike_count_report, weight_shift_report};
use aia_core::checkpoint::{load_checkpoint, save_checkpoint};
use aia_core::data::{binning_hash, gen_poisson_patterns, load_cache, save_cache, PoissonConfig};
use aia_core::train::evaluate;
use aia_core::{init_network, merge_beta, train, NetworkSpec, NeuronModel, TrainConfig};

fn poisson() -> PoissonConfig {
    PoissonConfig {
        class_count: 3,
        neurons: 12,
        timesteps: 5,
        rate_lo: 0.0,
        rate_hi: 0.6,
        n_per_class: 10,
        seed: 21,
    }
}

#[test]
fn train_checkpoint_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen_poisson_patterns(&poisson()).unwrap();
    let hash = binning_hash(&poisson()).unwrap();
    let cache = tmp.path().join("ds.bin");
    save_cache(&cache, &ds, &hash).unwrap();
    let ds = load_cache(&cache, Some(&hash)).unwrap();
    let (train_set, test_set) = ds.split(0.3, 1).unwrap();

    for model in NeuronModel::ALL {
        let net = init_network(&NetworkSpec::uniform(12, &[10, 3], model, 5), 2).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 5,
            learning_rate: 5e-3,
            ..Default::default()
        };
        let (trained, metrics) = train(&net, &train_set, &test_set, &cfg).unwrap();
        assert_ne!(trained, net, "{model}: nothing learned");
        assert_eq!(metrics.epochs.len(), 4);
        assert!(metrics.epochs.iter().all(|e| (0.0..=1.0).contains(&e.test_accuracy)));

        let path = tmp.path().join(format!("{model}.json"));
        save_checkpoint(&trained, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, trained);
        let eval = evaluate(&loaded, &test_set, cfg.batch_size).unwrap();
        assert_eq!(Some(eval.accuracy), metrics.final_test_accuracy());
        assert_eq!(eval.spike_counts, metrics.test_spike_counts);

        let report = spike_count_report(&loaded, &test_set).unwrap();
        assert!(report.per_layer.iter().zip(&report.bound).all(|(c, b)| c <= b));

        let merged = merge_beta(&loaded);
        let merged_eval = evaluate(&merged, &test_set, cfg.batch_size).unwrap();
        assert_eq!(merged_eval.predictions, eval.predictions, "{model}");
    }
}

#[test]
fn weight_shift_between_trained_models_is_balanced() {
    let ds = gen_poisson_patterns(&poisson()).unwrap();
    let (train_set, test_set) = ds.split(0.3, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 5,
        ..Default::default()
    };
    let nets: Vec<_> = [NeuronModel::Lif, NeuronModel::Aia]
        .into_iter()
        .map(|m| {
            let net = init_network(&NetworkSpec::uniform(12, &[10, 3], m, 5), 4).unwrap();
            train(&net, &train_set, &test_set, &cfg).unwrap().0
        })
        .collect();
    let edges = default_bin_edges(&nets[0], &nets[1], 11);
    let report = weight_shift_report(&nets[0], &nets[1], &edges).unwrap();
    assert_eq!(report.bins.len(), 11);
    let total: f64 = report.bins.iter().map(|b| b.delta).sum();
    assert!(total.abs() <= 1e-12);
    let counted: u64 = report.bins.iter().map(|b| b.count_a).sum();
    assert_eq!(counted as usize, report.total_weights);
}
