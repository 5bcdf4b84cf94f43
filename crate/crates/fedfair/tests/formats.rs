use std::path::Path;

use fedfair::checkpoint;
use fedfair::idx::{self, encode_images, encode_labels, load_idx};
use fedfair::Error;
use fedfair_core::model::ModelParams;
use proptest::prelude::*;

fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
    let (ip, lp) = idx::default_paths(dir);
    std::fs::write(&ip, images).unwrap();
    std::fs::write(&lp, labels).unwrap();
    (ip, lp)
}

#[test]
fn two_by_two_images_load_scaled() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..16).map(|i| if i == 5 { 255 } else { i * 10 }).collect();
    let (ip, lp) = write_pair(dir.path(), &encode_images(2, 2, &pixels), &encode_labels(&[0, 1, 2, 1]));
    let ds = load_idx(&ip, &lp, None).unwrap();
    assert_eq!((ds.len(), ds.num_features(), ds.num_classes()), (4, 4, 3));
    assert_eq!(ds.row(1)[1], 1.0);
    assert_eq!(ds.row(0), &[0.0, 10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
    assert_eq!(ds.labels(), &[0, 1, 2, 1]);
    assert_eq!(load_idx(&ip, &lp, Some(2)).unwrap().len(), 2);
}

#[test]
fn idx_errors_carry_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let images = encode_images(2, 2, &[0; 16]);

    let (ip, lp) = write_pair(dir.path(), &images, &encode_labels(&[0, 1, 0]));
    let e = load_idx(&ip, &lp, None).unwrap_err();
    assert!(matches!(e, Error::Format { offset: 4, .. }), "{e}");

    let mut bad = images.clone();
    bad[3] = 0x02;
    let (ip, lp) = write_pair(dir.path(), &bad, &encode_labels(&[0, 1, 0, 1]));
    let e = load_idx(&ip, &lp, None).unwrap_err();
    assert!(matches!(e, Error::Format { offset: 0, .. }), "{e}");

    let truncated = &images[..images.len() - 3];
    let (ip, lp) = write_pair(dir.path(), truncated, &encode_labels(&[0, 1, 0, 1]));
    let e = load_idx(&ip, &lp, None).unwrap_err();
    assert!(matches!(e, Error::Format { offset, .. } if offset == truncated.len() as u64), "{e}");
    assert!(e.to_string().contains("images-idx3-ubyte"), "{e}");
}

#[test]
fn missing_idx_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = idx::default_paths(dir.path());
    let e = load_idx(&ip, &lp, None).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
    assert!(e.to_string().contains("images-idx3-ubyte"));
}

#[test]
fn checkpoint_rejects_damage() {
    let w = ModelParams::from_values(2, 1, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let bytes = checkpoint::encode(&w);
    assert_eq!(&bytes[..8], b"FFAIRCK1");
    assert_eq!(bytes.len(), 16 + 8 * 4);
    let p = Path::new("x.ckpt");
    assert!(matches!(checkpoint::decode(p, &bytes[..10]), Err(Error::Format { .. })));
    assert!(matches!(checkpoint::decode(p, &bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(checkpoint::decode(p, &magic), Err(Error::Format { offset: 0, .. })));
}

proptest! {
    #[test]
    fn checkpoints_round_trip(classes in 2usize..6, features in 1usize..8, seed in any::<u64>()) {
        let n = classes * (features + 1);
        let values: Vec<f64> = (0..n).map(|i| ((seed.wrapping_mul(i as u64 + 1)) as f64).sin() * 1e3).collect();
        let w = ModelParams::from_values(classes, features, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        checkpoint::save(&path, &w).unwrap();
        prop_assert_eq!(checkpoint::load(&path).unwrap(), w);
    }
}
