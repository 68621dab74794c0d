use onh_baselines::{
    ae_classify, central_section, dice, train_ae_classifier, train_autoencoder, AutoencoderConfig, AutoencoderModel,
    BaselineError, SectionRaster, SECTION_CLASSES,
};
use onh_phantom::{generate_phantom, sample_cohort, CohortConfig};

fn sections(n: usize, seed: u64) -> Vec<(Vec<u8>, f64)> {
    let cfg = CohortConfig {
        n,
        seed,
        ..CohortConfig::default()
    };
    sample_cohort(&cfg)
        .unwrap()
        .into_iter()
        .map(|e| {
            let (v, _) = generate_phantom(&e.params, e.seed).unwrap();
            (central_section(&v, SectionRaster::default()).unwrap(), e.params.bmo_radius_mm)
        })
        .collect()
}

#[test]
fn central_section_is_resampled_to_the_raster() {
    let s = sections(2, 3);
    let raster = SectionRaster::default();
    assert_eq!(s[0].0.len(), raster.pixels());
    assert!(s[0].0.iter().all(|&l| (l as usize) < SECTION_CLASSES));
    // Every anatomical class shows up on the central B-scan.
    for c in 1..SECTION_CLASSES as u8 {
        assert!(s[0].0.contains(&c), "class {c} missing");
    }
}

fn desk_config(epochs: usize) -> AutoencoderConfig {
    AutoencoderConfig {
        epochs,
        batch_size: 16,
        learning_rate: 2e-3,
        seed: 5,
        ..AutoencoderConfig::default()
    }
}

#[test]
fn pretraining_loss_improves_and_is_reproducible() {
    let data = sections(50, 100);
    let train: Vec<&[u8]> = data.iter().map(|s| s.0.as_slice()).collect();
    let cfg = desk_config(12);
    let (model, history) = train_autoencoder(&train, &cfg).unwrap();
    assert_eq!(history.len(), 12);
    assert!(history.iter().all(|l| l.is_finite()));
    let best: Vec<f64> = history
        .iter()
        .scan(f64::INFINITY, |m, &l| {
            *m = f64::min(*m, l);
            Some(*m)
        })
        .collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    assert!(best[11] < 0.25 * history[0], "loss {} -> {}", history[0], best[11]);

    let (again, h2) = train_autoencoder(&train, &cfg).unwrap();
    assert_eq!(h2, history);
    assert_eq!(again.encoder_hash(), model.encoder_hash());
}

#[test]
fn autoencoder_reconstructs_held_out_sections() {
    let data = sections(155, 100);
    let (train, held_out) = data.split_at(150);
    let sections: Vec<&[u8]> = train.iter().map(|s| s.0.as_slice()).collect();
    let (model, _) = train_autoencoder(&sections, &desk_config(60)).unwrap();
    let scores: Vec<f64> = held_out
        .iter()
        .map(|(s, _)| dice(&model.reconstruct(s).unwrap(), s).unwrap())
        .collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    assert!(mean >= 0.85, "held-out Dice {scores:?}");

    // The head trains on frozen latents.
    let labelled: Vec<(&[u8], usize)> = data
        .iter()
        .map(|(s, r)| (s.as_slice(), usize::from(*r > 0.825)))
        .collect();
    let (tr, va) = labelled.split_at(120);
    let with_head = train_ae_classifier(&model, tr, va).unwrap();
    assert_eq!(with_head.encoder_hash(), model.encoder_hash());
    assert_eq!(with_head.params, model.params);
    for (s, _) in held_out {
        let p = ae_classify(&with_head, s).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    assert!(matches!(ae_classify(&model, &held_out[0].0), Err(BaselineError::Untrained(_))));
}

fn toy_config() -> AutoencoderConfig {
    AutoencoderConfig {
        raster: SectionRaster { width: 4, height: 4 },
        latent_width: 3,
        epochs: 40,
        batch_size: 2,
        learning_rate: 1e-2,
        seed: 9,
        ..AutoencoderConfig::default()
    }
}

/// Class 1 fills the top half with tissue 2, class 0 the bottom half.
fn toy_sections() -> Vec<(Vec<u8>, usize)> {
    (0..8)
        .map(|i| {
            let label = i % 2;
            let mut s = vec![0u8; 16];
            let half = if label == 1 { 0..8 } else { 8..16 };
            for p in half {
                s[p] = 2;
            }
            // a little per-sample texture keeps the sections distinct
            s[(i * 5) % 16] = 1;
            (s, label)
        })
        .collect()
}

#[test]
fn separable_toy_sections_are_fitted_exactly() {
    let data = toy_sections();
    let sections: Vec<&[u8]> = data.iter().map(|s| s.0.as_slice()).collect();
    let (model, _) = train_autoencoder(&sections, &toy_config()).unwrap();
    let labelled: Vec<(&[u8], usize)> = data.iter().map(|(s, l)| (s.as_slice(), *l)).collect();
    let model = train_ae_classifier(&model, &labelled, &labelled).unwrap();
    for (s, l) in &labelled {
        let p = ae_classify(&model, s).unwrap();
        assert_eq!(usize::from(p > 0.5), *l, "p = {p}");
    }
}

#[test]
fn saved_models_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_sections();
    let sections: Vec<&[u8]> = data.iter().map(|s| s.0.as_slice()).collect();
    let (model, _) = train_autoencoder(&sections, &toy_config()).unwrap();
    let stem = dir.path().join("ae");
    model.save(&stem).unwrap();
    assert_eq!(AutoencoderModel::load(&stem).unwrap(), model);

    let labelled: Vec<(&[u8], usize)> = data.iter().map(|(s, l)| (s.as_slice(), *l)).collect();
    let with_head = train_ae_classifier(&model, &labelled, &labelled).unwrap();
    with_head.save(&stem).unwrap();
    let back = AutoencoderModel::load(&stem).unwrap();
    assert_eq!(back, with_head);
    assert_eq!(ae_classify(&back, sections[0]).unwrap(), ae_classify(&with_head, sections[0]).unwrap());
}

#[test]
fn untrained_and_malformed_inputs_are_rejected() {
    let cfg = AutoencoderConfig {
        raster: SectionRaster { width: 4, height: 4 },
        latent_width: 3,
        ..AutoencoderConfig::default()
    };
    let model = AutoencoderModel::new(cfg.clone()).unwrap();
    let section = vec![0u8; 16];
    assert!(matches!(ae_classify(&model, &section), Err(BaselineError::Untrained(_))));
    assert!(matches!(
        train_ae_classifier(&model, &[(&section, 0)], &[(&section, 1)]),
        Err(BaselineError::Untrained(_))
    ));
    assert!(matches!(model.encode(&[&section[..15]]), Err(BaselineError::Shape(_))));
    let bad = vec![9u8; 16];
    assert!(matches!(model.encode(&[&bad]), Err(BaselineError::Shape(_))));
    assert!(matches!(train_autoencoder(&[], &cfg), Err(BaselineError::Empty(_))));
    let zero = AutoencoderConfig {
        latent_width: 0,
        ..cfg
    };
    assert!(matches!(AutoencoderModel::new(zero), Err(BaselineError::Config(_))));
}
