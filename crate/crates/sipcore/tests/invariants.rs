mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sipcore::channel::{split_dataset, ChannelTensor};
use sipcore::eval::{make_region_masks, nmse, pdp_region_stats, NMSE_FLOOR_DB};
use sipcore::grid::{make_dft_pilots, ResourceGrid};
use sipcore::linalg::CMatrix;
use sipcore::rx::{cancel_pilots, despread_smooth, hard_decision, ls_estimate, mmse_detect};
use sipcore::train::loss;
use sipcore::tx::{logit, sigmoid, superimpose, Constellation, PdpFactors};
use support::{gauss, rel_err, Instance};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn re_index_is_a_bijection(s_n in 1usize..40, t_n in 1usize..20) {
        let grid = ResourceGrid::new(s_n, t_n).unwrap();
        let mut hit = vec![0u8; grid.res()];
        for t in 0..t_n {
            for s in 0..s_n {
                let e = grid.re_index(s, t).unwrap();
                hit[e] += 1;
                prop_assert_eq!(grid.grid_index(e).unwrap(), (s, t));
            }
        }
        prop_assert!(hit.iter().all(|&n| n == 1));
    }

    #[test]
    fn dft_pilots_are_orthogonal_when_users_divide_the_grid(k in 1usize..13, s_mult in 1usize..5, t_n in 1usize..15) {
        let grid = ResourceGrid::new(k * s_mult, t_n).unwrap();
        let book = make_dft_pilots(k, &grid).unwrap();
        prop_assert!(book.verify_orthogonality(1e-9).pass);
        prop_assert!(book.as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sigmoid_logit_round_trip(x in -15.0f64..15.0) {
        let p = sigmoid(x);
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!((logit(p) - x).abs() <= 1e-6 * (1.0 + x.abs()));
    }

    #[test]
    fn cancelling_the_ls_estimate_scales_the_signal(seed in any::<u64>()) {
        // every user's LS estimate explains all of Y, so K copies are removed
        let x = Instance::random(&mut ChaCha8Rng::seed_from_u64(seed));
        let h = ls_estimate(&x.y, &x.rho, &x.pilots, x.power).unwrap();
        let r = cancel_pilots(&x.y, &h, &x.rho, &x.pilots, x.power).unwrap();
        let want: Vec<_> = x.y.as_slice().iter().map(|v| v * (1.0 - x.k as f64)).collect();
        prop_assert!(rel_err(r.as_slice(), &want) < 1e-12 || x.k == 1 && r.energy() < 1e-24 * x.y.energy().max(1.0));
    }

    #[test]
    fn full_pilot_power_carries_no_data(seed in any::<u64>()) {
        let x = Instance::random(&mut ChaCha8Rng::seed_from_u64(seed));
        let rho = PdpFactors::uniform(x.k, x.e(), 1.0).unwrap();
        let s = superimpose(&rho, &x.pilots, &x.data, x.power).unwrap();
        let want: Vec<_> = x.pilots.as_slice().iter().map(|p| p * x.power.sqrt()).collect();
        prop_assert!(rel_err(s.as_slice(), &want) < 1e-15);
    }

    #[test]
    fn noiseless_mmse_inverts_a_tall_channel(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k, e) = (4, 2, 6);
        let h = ChannelTensor::from_vec(m, k, e, (0..m * k * e).map(|_| gauss(&mut rng)).collect()).unwrap();
        let rho = PdpFactors::uniform(k, e, 0.2).unwrap();
        let d = CMatrix::from_fn(k, e, |_, _| gauss(&mut rng));
        let y = CMatrix::from_fn(m, e, |mi, ei| {
            (0..k).map(|ki| h.get(mi, ki, ei) * d.get(ki, ei) * (0.8f64).sqrt()).sum()
        });
        let soft = mmse_detect(&y, &h, &rho, 1.0, 0.0).unwrap();
        prop_assert!(rel_err(soft.as_slice(), d.as_slice()) < 1e-8);
    }

    #[test]
    fn smoothing_preserves_constant_links(s_n in 1usize..9, t_n in 1usize..9, ws in 0usize..3, wt in 0usize..3, re in -2.0f64..2.0) {
        let grid = ResourceGrid::new(s_n, t_n).unwrap();
        let v = sipcore::C64::new(re, 0.5);
        let h = ChannelTensor::from_vec(2, 1, grid.res(), vec![v; 2 * grid.res()]).unwrap();
        let out = despread_smooth(&h, &grid, (2 * ws + 1, 2 * wt + 1)).unwrap();
        prop_assert!(out.as_slice().iter().all(|z| (z - v).norm() < 1e-12));
    }

    #[test]
    fn loss_is_a_squared_distance(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(rows, cols, |_, _| gauss(&mut rng));
        let b = CMatrix::from_fn(rows, cols, |_, _| gauss(&mut rng));
        let ab = loss(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(loss(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - loss(&b, &a).unwrap()).abs() <= 1e-12 * ab);
        prop_assert!((ab - support::oracle_loss(&a, &b)).abs() <= 1e-12 * ab);
    }

    #[test]
    fn exact_estimates_sit_on_the_floor(seed in any::<u64>()) {
        let x = Instance::random(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(nmse(&x.h, &x.h).unwrap(), NMSE_FLOOR_DB);
    }

    #[test]
    fn hard_decisions_recover_constellation_points(idx in proptest::collection::vec(0usize..16, 1..64)) {
        let qam = Constellation::qam(16).unwrap();
        let soft = CMatrix::from_vec(1, idx.len(), idx.iter().map(|&i| qam.points()[i]).collect()).unwrap();
        prop_assert_eq!(hard_decision(&soft, &qam), idx);
    }

    #[test]
    fn split_is_a_partition(n in 9usize..400, seed in any::<u64>()) {
        let s = split_dataset(n, seed).unwrap();
        prop_assert_eq!((s.train.len(), s.val.len()), (7 * n / 9, n / 9));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn constant_factors_have_constant_region_statistics(rbs in 2usize..5, t_n in 4usize..15, k in 1usize..4, rho in 0.0f64..1.0) {
        let grid = ResourceGrid::new(12 * rbs, t_n).unwrap();
        let masks = make_region_masks(&grid).unwrap();
        let reports = pdp_region_stats(&PdpFactors::uniform(k, grid.res(), rho).unwrap(), &masks).unwrap();
        for r in &reports {
            let Some(p) = r.pooled else { continue };
            // reported in percent
            prop_assert!((p.mean - 100.0 * rho).abs() < 1e-10, "{}: {:?}", r.region, p);
            prop_assert!(p.std < 1e-10);
        }
        for (_, m) in masks.regions() {
            prop_assert_eq!(m.len(), grid.res());
        }
    }
}
