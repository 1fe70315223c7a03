mod common;

use common::{generate, roundtrip_exact, Spec};
use qdmr_core::io::gradients::format_fsl;
use qdmr_core::io::{write_nifti, NiftiHeaderBlob};
use qdmr_core::qspace::OrderingStrategy;
use qdmr_core::{compress, decompress, stats, CodecOptions, Dims, DwiDataset, MotionMode, QspacePredictor, Volume};

#[test]
fn two_shells_and_several_b0() {
    let spec = Spec { noise_sigma: 5.0, ..Spec::new(Dims::new(10, 12, 7), 3, vec![(1000.0, 8), (2000.0, 7)], 3) };
    let s = generate(&spec);
    assert_eq!(s.dataset.gradients.shells.len(), 2);
    for predictor in [QspacePredictor::Lh, QspacePredictor::Bh, QspacePredictor::Dti] {
        let bytes = compress(&s.dataset, &CodecOptions { predictor, ..Default::default() }).unwrap();
        assert!(roundtrip_exact(&s, &bytes), "{predictor:?}");
        let report = stats(&bytes, None).unwrap();
        assert_eq!(report.records.len(), 18);
        assert_eq!(report.total, bytes.len());
    }
}

#[test]
fn qspace_records_never_precede_spatial_dwis() {
    let spec = Spec { texture: 0.2, ..Spec::new(Dims::new(14, 14, 10), 1, vec![(1000.0, 16)], 5) };
    let s = generate(&spec);
    let bytes = compress(&s.dataset, &CodecOptions::default()).unwrap();
    let report = stats(&bytes, None).unwrap();
    let mut records = report.records.clone();
    records.sort_by_key(|r| r.position);
    let kinds: Vec<&str> =
        records.iter().map(|r| r.kind.name()).filter(|k| *k == "spatial" || *k == "qspace").collect();
    let first_q = kinds.iter().position(|k| *k == "qspace").expect("q-space prediction is used");
    assert!(kinds[first_q..].iter().all(|k| *k == "qspace"), "{kinds:?}");
}

#[test]
fn spatial_only_uses_no_qspace_records() {
    let s = generate(&Spec::new(Dims::new(9, 9, 6), 1, vec![(1000.0, 6)], 8));
    let bytes = compress(&s.dataset, &CodecOptions { spatial_only: true, ..Default::default() }).unwrap();
    assert!(roundtrip_exact(&s, &bytes));
    assert_eq!(stats(&bytes, None).unwrap().qspace, 0);
}

#[test]
fn motion_modes_all_roundtrip() {
    let spec = Spec {
        motion: Some((4.0, 2.0)),
        noise_sigma: 2.0,
        ..Spec::new(Dims::new(16, 16, 12), 1, vec![(1000.0, 8)], 9)
    };
    let s = generate(&spec);
    for motion in [MotionMode::Off, MotionMode::Builtin, MotionMode::Import(s.transform_texts())] {
        for ordering in [OrderingStrategy::Furthest, OrderingStrategy::Closest] {
            let bytes =
                compress(&s.dataset, &CodecOptions { motion: motion.clone(), ordering, ..Default::default() }).unwrap();
            assert!(roundtrip_exact(&s, &bytes), "{motion:?} {ordering:?}");
        }
    }
}

#[test]
fn extreme_intensities_roundtrip() {
    // Saturated and zero voxels stress the modular residuals and clamping.
    let d = Dims::new(7, 6, 5);
    let volumes: Vec<Volume> = (0..6)
        .map(|k| {
            let s = (0..d.len())
                .map(|i| match (i + k) % 5 {
                    0 => 0,
                    1 => 65535,
                    2 => 1,
                    _ => (i * 977 + k * 31) as u16,
                })
                .collect();
            Volume::new(d, s).unwrap()
        })
        .collect();
    let bvals = [0.0, 1000.0, 1000.0, 1000.0, 1000.0, 1000.0];
    let bvecs = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0], [0.0, 0.6, 0.8]];
    let (bval, bvec) = format_fsl(&bvals, &bvecs);
    let nifti = write_nifti(&NiftiHeaderBlob::new_u16(d, 6, [1.0; 3]).unwrap(), &volumes).unwrap();
    let ds = DwiDataset::from_bytes(&nifti, bval.as_bytes(), bvec.as_bytes(), 50.0).unwrap();
    for predictor in [QspacePredictor::Lh, QspacePredictor::Bh] {
        let bytes = compress(&ds, &CodecOptions { predictor, ..Default::default() }).unwrap();
        assert_eq!(decompress(&bytes).unwrap().nifti_bytes().unwrap(), nifti);
    }
}

#[test]
fn gzip_input_restores_uncompressed_nifti() {
    use std::io::Write;
    let s = generate(&Spec::new(Dims::new(8, 8, 5), 1, vec![(1000.0, 6)], 12));
    let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
    gz.write_all(&s.nifti).unwrap();
    let ds = DwiDataset::from_bytes(&gz.finish().unwrap(), &s.bval, &s.bvec, 50.0).unwrap();
    let bytes = compress(&ds, &CodecOptions::default()).unwrap();
    assert_eq!(decompress(&bytes).unwrap().nifti_bytes().unwrap(), s.nifti);
}

#[test]
fn truncated_containers_are_rejected() {
    let s = generate(&Spec::new(Dims::new(8, 7, 5), 1, vec![(1000.0, 6)], 13));
    let bytes = compress(&s.dataset, &CodecOptions::default()).unwrap();
    for cut in [0, 4, 20, bytes.len() / 3, bytes.len() - 1] {
        assert!(decompress(&bytes[..cut]).is_err(), "cut at {cut}");
    }
}
