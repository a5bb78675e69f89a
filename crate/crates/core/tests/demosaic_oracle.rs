mod support;

use gpc_core::demosaic::{cfa_color, demosaic_bilinear, demosaic_gradient, BayerImage, CfaColor, CfaPhase, RgbImage};
use gpc_core::parexec::{ChunkOutput, Executor, Sequential};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs chunks back to front.
struct Backwards;

impl Executor for Backwards {
    fn workers(&self) -> usize {
        4
    }

    fn run_chunks(&self, chunks: usize, job: &(dyn Fn(usize) -> ChunkOutput + Sync)) -> Vec<ChunkOutput> {
        let mut v: Vec<_> = (0..chunks).rev().map(job).collect();
        v.reverse();
        v
    }
}

fn random_mosaic(rng: &mut ChaCha8Rng, rows: usize, cols: usize, phase: CfaPhase) -> BayerImage {
    let s = (0..rows * cols).map(|_| rng.gen::<u16>()).collect();
    BayerImage::new(rows, cols, phase, s).unwrap()
}

fn check_against_oracle(img: &BayerImage, out: &RgbImage, gradient: bool) {
    let (r, g, b) = support::demosaic_oracle(img.rows(), img.cols(), img.phase().as_str(), img.samples(), gradient);
    assert_eq!(out.red, r, "red plane, phase {}", img.phase());
    assert_eq!(out.green, g, "green plane, phase {}", img.phase());
    assert_eq!(out.blue, b, "blue plane, phase {}", img.phase());
}

#[test]
fn cfa_matches_oracle_table() {
    for phase in CfaPhase::ALL {
        for r in 0..4 {
            for c in 0..4 {
                let want = support::site(phase.as_str(), r, c);
                let got = match cfa_color(phase, r, c) {
                    CfaColor::Red => 'R',
                    CfaColor::Blue => 'B',
                    _ => 'G',
                };
                assert_eq!(got, want);
            }
        }
    }
}

#[test]
fn both_kernels_match_oracle_on_random_mosaics() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for phase in CfaPhase::ALL {
        for _ in 0..5 {
            let img = random_mosaic(&mut rng, 64, 64, phase);
            check_against_oracle(&img, &demosaic_bilinear(&Sequential, &img), false);
            check_against_oracle(&img, &demosaic_gradient(&Sequential, &img), true);
        }
    }
}

#[test]
fn odd_and_tiny_sizes_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (rows, cols) in [(2, 2), (2, 3), (3, 2), (5, 7), (17, 4)] {
        for phase in CfaPhase::ALL {
            let img = random_mosaic(&mut rng, rows, cols, phase);
            check_against_oracle(&img, &demosaic_bilinear(&Sequential, &img), false);
            check_against_oracle(&img, &demosaic_gradient(&Sequential, &img), true);
        }
    }
}

#[test]
fn measured_samples_preserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for phase in CfaPhase::ALL {
        let img = random_mosaic(&mut rng, 32, 48, phase);
        for out in [demosaic_bilinear(&Sequential, &img), demosaic_gradient(&Sequential, &img)] {
            for r in 0..img.rows() {
                for c in 0..img.cols() {
                    let p = out.pixel(r, c);
                    let k = match cfa_color(phase, r, c) {
                        CfaColor::Red => 0,
                        CfaColor::Blue => 2,
                        _ => 1,
                    };
                    assert_eq!(p[k], img.get(r, c));
                }
            }
        }
    }
}

#[test]
fn schedule_does_not_change_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = random_mosaic(&mut rng, 130, 90, CfaPhase::Grbg);
    assert_eq!(demosaic_bilinear(&Sequential, &img), demosaic_bilinear(&Backwards, &img));
    assert_eq!(demosaic_gradient(&Sequential, &img), demosaic_gradient(&Backwards, &img));
}

fn rotate180(v: &[u16]) -> Vec<u16> {
    v.iter().rev().copied().collect()
}

#[test]
fn rotation_by_180_swaps_rggb_and_bggr() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let img = random_mosaic(&mut rng, 24, 36, CfaPhase::Rggb);
    let rotated = BayerImage::new(24, 36, CfaPhase::Bggr, rotate180(img.samples())).unwrap();
    let a = demosaic_bilinear(&Sequential, &img);
    let b = demosaic_bilinear(&Sequential, &rotated);
    assert_eq!(b.red, rotate180(&a.red));
    assert_eq!(b.green, rotate180(&a.green));
    assert_eq!(b.blue, rotate180(&a.blue));
}

#[test]
fn saturated_mosaic_stays_in_range() {
    let img = BayerImage::new(8, 8, CfaPhase::Gbrg, vec![u16::MAX; 64]).unwrap();
    for out in [demosaic_bilinear(&Sequential, &img), demosaic_gradient(&Sequential, &img)] {
        assert!(out.planes().iter().all(|p| p.iter().all(|&v| v == u16::MAX)));
    }
}
