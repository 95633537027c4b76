use std::fs;

use proptest::prelude::*;
use tempfile::TempDir;

use radam_core::aggregate::{gap_agg, ActivationMap};
use radam_core::classifier::{
    evaluate, lda_train, stack_rows, svm_train, ClassifierModel, SvmParams,
};
use radam_core::rae::{radam_feature, RadamConfig, RadamEncoder};
use radam_core::rng::LcgParams;
use radam_core::tensorio::{read_manifest, read_tensor, write_tensor, Split, Tensor};

fn block(w: usize, h: usize, z: usize, seed: usize) -> Tensor {
    let data = (0..w * h * z)
        .map(|i| (((i * 7919 + seed * 104_729) % 1000) as f32 / 500.0 - 0.4).max(0.0))
        .collect();
    Tensor::new(vec![z, h, w], data).unwrap()
}

#[test]
fn radt_header_layout() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("t.radt");
    write_tensor(
        &Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.5]).unwrap(),
        &path,
    )
    .unwrap();
    let bytes = fs::read(&path).unwrap();

    let mut expected = b"RADT".to_vec();
    for v in [1u32, 2, 2, 3, 0] {
        expected.extend(v.to_le_bytes());
    }
    for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, -0.5] {
        expected.extend(v.to_le_bytes());
    }
    assert_eq!(bytes, expected);
}

#[test]
fn manifest_to_feature_on_disk() {
    let tmp = TempDir::new().unwrap();
    let shapes = [(16, 16, 4), (8, 8, 8), (4, 4, 12), (2, 2, 8)];
    for img in 0..3 {
        let dir = tmp.path().join(format!("img{img}"));
        fs::create_dir_all(&dir).unwrap();
        for (b, &(w, h, z)) in shapes.iter().enumerate() {
            // block_10 must sort after block_2
            let name = ["block_1", "block_2", "block_10", "block_11"][b];
            write_tensor(
                &block(w, h, z, img * 10 + b),
                dir.join(format!("{name}.radt")),
            )
            .unwrap();
        }
    }
    fs::write(
        tmp.path().join("m.jsonl"),
        "{\"path\":\"img0\",\"label\":\"a\",\"split\":\"train\"}\n\
         {\"path\":\"img1\",\"label\":\"b\",\"split\":\"train\"}\n\
         {\"path\":\"img2\",\"label\":\"a\",\"split\":\"test\"}\n",
    )
    .unwrap();

    let manifest = read_manifest(tmp.path().join("m.jsonl")).unwrap();
    assert_eq!(manifest.block_count, 4);
    assert_eq!(manifest.records[2].split, Split::Test);
    let names: Vec<_> = manifest.records[0]
        .blocks
        .iter()
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["block_1", "block_2", "block_10", "block_11"]);

    let maps: Vec<ActivationMap> = manifest.records[0]
        .blocks
        .iter()
        .enumerate()
        .map(|(i, p)| ActivationMap::from_tensor(&read_tensor(p).unwrap(), i).unwrap())
        .collect();
    let phi = radam_feature(&maps, 4, LcgParams::ZX81).unwrap();
    assert_eq!(phi.phi.len(), 32);
    assert_eq!(phi.provenance.block_channels, vec![4, 8, 12, 8]);
    // anchor is block ceil(4 / 2) = 2, i.e. 8x8
    assert_eq!(phi.provenance.anchor, (8, 8));
    assert_eq!(gap_agg(&maps).len(), 32);
}

#[test]
fn saved_models_predict_identically() {
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|i| {
            let c = (i % 3) as f64;
            vec![
                c * 2.0 + (i as f64 * 0.37).sin() * 0.3,
                (i as f64 * 1.3).cos() - c,
                0.5 * c,
            ]
        })
        .collect();
    let labels: Vec<String> = (0..30).map(|i| format!("c{}", i % 3)).collect();
    let x = stack_rows(&rows).unwrap();
    let tmp = TempDir::new().unwrap();

    let svm_std = SvmParams {
        standardize: true,
        ..SvmParams::default()
    };
    let models = [
        svm_train(&x, &labels, &SvmParams::default()).unwrap(),
        svm_train(&x, &labels, &svm_std).unwrap(),
        lda_train(&x, &labels, false).unwrap(),
    ];
    for (i, model) in models.iter().enumerate() {
        let dir = tmp.path().join(i.to_string());
        model.save(&dir).unwrap();
        let loaded = ClassifierModel::load(&dir).unwrap();
        assert_eq!(loaded.kind, model.kind);
        assert_eq!(loaded.scaler.is_some(), model.scaler.is_some());
        assert_eq!(loaded.predict(&x).unwrap(), model.predict(&x).unwrap());
        assert_eq!(
            evaluate(&loaded, &x, &labels).unwrap(),
            evaluate(model, &x, &labels).unwrap()
        );
        // parameters are stored as f32
        let exact = model.decision_values(&x).unwrap();
        let drift = (loaded.decision_values(&x).unwrap() - &exact).amax();
        assert!(drift <= 1e-5 * (1.0 + exact.amax()), "{drift}");
    }
}

fn maps_from(data: &[f64], scales: &[f64]) -> Vec<ActivationMap> {
    let shapes = [(6, 6, 4), (3, 3, 4)];
    let mut offset = 0;
    let mut c = 0;
    shapes
        .iter()
        .enumerate()
        .map(|(b, &(w, h, z))| {
            let n = w * h * z;
            let mut v = data[offset..offset + n].to_vec();
            for ch in 0..z {
                v[ch * w * h..(ch + 1) * w * h]
                    .iter_mut()
                    .for_each(|x| *x *= scales[c]);
                c += 1;
            }
            offset += n;
            ActivationMap::new(w, h, z, v, b).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Per-channel L2 normalization makes the descriptor blind to positive
    /// per-channel gains of the backbone.
    #[test]
    fn descriptor_ignores_channel_gain(
        data in prop::collection::vec(0.01f64..3.0, 6 * 6 * 4 + 3 * 3 * 4),
        gains in prop::collection::vec(0.1f64..10.0, 8),
    ) {
        let enc_cfg = RadamConfig::default();
        let plain = maps_from(&data, &[1.0; 8]);
        let scaled = maps_from(&data, &gains);
        let enc = RadamEncoder::for_maps(&plain, enc_cfg).unwrap();
        let a = enc.encode(&plain).unwrap().phi;
        let b = enc.encode(&scaled).unwrap().phi;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
}
