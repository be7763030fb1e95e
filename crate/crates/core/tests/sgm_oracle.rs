mod common;

use common::{enumerate_path, oracle_path};
use lfdepth::sgm::DIRECTIONS_8;
use lfdepth::{aggregate_path, sgm_sum, CostVolume, DisparityRange, SgmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_volume(rng: &mut ChaCha8Rng, max_side: usize, max_nd: usize) -> (usize, usize, usize, Vec<u32>, u32) {
    let w = rng.gen_range(1..=max_side);
    let h = rng.gen_range(1..=max_side);
    let nd = rng.gen_range(1..=max_nd);
    let c_max = rng.gen_range(1..=60u32);
    let costs = (0..w * h * nd)
        .map(|_| if rng.gen_bool(0.1) { c_max } else { rng.gen_range(0..=c_max) })
        .collect();
    (w, h, nd, costs, c_max)
}

fn penalties(rng: &mut ChaCha8Rng) -> (u32, u32) {
    let p1 = rng.gen_range(0..=20);
    (p1, rng.gen_range(p1..=20))
}

#[test]
fn dp_oracle_matches_on_random_volumes() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5a17);
    for _ in 0..300 {
        let (w, h, nd, costs, c_max) = random_volume(&mut rng, 8, 6);
        let (p1, p2) = penalties(&mut rng);
        let range = DisparityRange::new(-1, nd as i32 - 2).unwrap();
        let vol = CostVolume::from_costs(w, h, range, costs.clone(), c_max);
        let params = SgmParams::new(p1, p2, DIRECTIONS_8.to_vec()).unwrap();
        for r in DIRECTIONS_8 {
            let got = aggregate_path(&vol, r, &params).unwrap();
            let want = oracle_path(w, h, nd, &costs, r, p1.into(), p2.into());
            assert_eq!(got.costs(), &want[..], "{w}x{h} nd={nd} r={r:?} P1={p1} P2={p2}");
        }
    }
}

#[test]
fn enumeration_agrees_with_dp_on_tiny_volumes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (w, h, nd, costs, c_max) = random_volume(&mut rng, 4, 3);
        let (p1, p2) = penalties(&mut rng);
        let vol = CostVolume::from_costs(w, h, DisparityRange::new(0, nd as i32 - 1).unwrap(), costs.clone(), c_max);
        let params = SgmParams::new(p1, p2, DIRECTIONS_8.to_vec()).unwrap();
        for r in DIRECTIONS_8 {
            let brute = enumerate_path(w, h, nd, &costs, r, p1.into(), p2.into());
            assert_eq!(brute, oracle_path(w, h, nd, &costs, r, p1.into(), p2.into()));
            assert_eq!(aggregate_path(&vol, r, &params).unwrap().costs(), &brute[..]);
        }
    }
}

#[test]
fn non_unit_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dirs = [(2, 1), (-1, 2), (3, 0), (0, -2)];
    for _ in 0..50 {
        let (w, h, nd, costs, c_max) = random_volume(&mut rng, 8, 5);
        let (p1, p2) = penalties(&mut rng);
        let vol = CostVolume::from_costs(w, h, DisparityRange::new(0, nd as i32 - 1).unwrap(), costs.clone(), c_max);
        let params = SgmParams::new(p1, p2, dirs.to_vec()).unwrap();
        for r in dirs {
            let want = oracle_path(w, h, nd, &costs, r, p1.into(), p2.into());
            assert_eq!(aggregate_path(&vol, r, &params).unwrap().costs(), &want[..]);
        }
    }
}

#[test]
fn direction_sum_is_sum_of_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for count in [4usize, 8] {
        for _ in 0..40 {
            let (w, h, nd, costs, c_max) = random_volume(&mut rng, 7, 5);
            let (p1, p2) = penalties(&mut rng);
            let vol = CostVolume::from_costs(w, h, DisparityRange::new(0, nd as i32 - 1).unwrap(), costs.clone(), c_max);
            let params = SgmParams::with_count(p1, p2, count).unwrap();
            let mut want = vec![0u64; w * h * nd];
            for &r in params.directions() {
                for (s, x) in want.iter_mut().zip(oracle_path(w, h, nd, &costs, r, p1.into(), p2.into())) {
                    *s += x;
                }
            }
            assert_eq!(sgm_sum(&vol, &params).costs(), &want[..]);
        }
    }
}

#[test]
fn wide_accumulators_do_not_overflow() {
    // 4096-pixel path of maximal costs: far beyond u32 range once summed over 8 directions
    let w = 4096;
    let nd = 3;
    let c_max = 15 * 64 + 1;
    let vol = CostVolume::from_costs(w, 1, DisparityRange::new(0, 2).unwrap(), vec![c_max; w * nd], c_max);
    let params = SgmParams::with_count(6, 96, 8).unwrap();
    let l = aggregate_path(&vol, (1, 0), &params).unwrap();
    assert_eq!(l.pixel(w - 1, 0)[0], w as u64 * u64::from(c_max));
    let s = sgm_sum(&vol, &params);
    assert!(s.pixel(w / 2, 0).iter().all(|&x| x > 0));
}
