mod common;

use bitvec::prelude::*;
use pancstudy::metrics::{dice, edt, evaluate_case, extract_mask, hausdorff, BinaryMask, EvalOptions, HdPolicy};
use pancstudy::{GridSpec, LabelVolume};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    (
        [1usize..7, 1usize..7, 1usize..7],
        [0.3f64..3.0, 0.3f64..3.0, 0.3f64..3.0],
        any::<u64>(),
        0.05f64..0.6,
    )
        .prop_map(|(dims, spacing, seed, fill)| {
            let grid = GridSpec::new(dims, spacing, [0.0; 3]).unwrap();
            common::random_mask_on(&mut ChaCha8Rng::seed_from_u64(seed), grid, fill)
        })
}

proptest! {
    #[test]
    fn edt_matches_brute_force(mask in mask_strategy()) {
        let fast = edt(&mask).unwrap();
        let slow = common::brute_edt(&mask);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn hausdorff_matches_brute_force(seed in any::<u64>(), fa in 0.05f64..0.7, fb in 0.05f64..0.7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_mask(&mut rng, 6, fa);
        let b = common::random_mask_on(&mut rng, *a.grid(), fb);
        let hd = hausdorff(&a, &b).unwrap();
        prop_assert!((hd - common::brute_hausdorff(&a, &b)).abs() <= 1e-9);
        prop_assert_eq!(hd, hausdorff(&b, &a).unwrap());
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn dice_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_mask(&mut rng, 6, 0.3);
        let b = common::random_mask_on(&mut rng, *a.grid(), 0.3);
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        let inter = (0..a.grid().len()).filter(|&i| a.get(i) && b.get(i)).count();
        prop_assert!((d - 2.0 * inter as f64 / (a.count() + b.count()) as f64).abs() < 1e-15);
    }
}

#[test]
fn single_voxel_edt_on_anisotropic_grid() {
    let grid = GridSpec::new([3, 3, 3], [1.0, 2.0, 3.0], [0.0; 3]).unwrap();
    let mut bits = bitvec![0; 27];
    bits.set(grid.index(1, 1, 1), true);
    let d = edt(&BinaryMask::new(grid, bits).unwrap()).unwrap();
    assert_eq!(d[grid.index(1, 1, 1)], 0.0);
    assert_eq!(d[grid.index(0, 1, 1)], 1.0);
    assert_eq!(d[grid.index(1, 0, 1)], 2.0);
    assert_eq!(d[grid.index(1, 1, 0)], 3.0);
    assert!((d[grid.index(0, 0, 0)] - 14f64.sqrt()).abs() < 1e-15);
}

#[test]
fn shifted_box_hausdorff_is_shift_times_spacing() {
    for (axis, spacing) in [(0usize, 0.7), (1, 1.3), (2, 2.5)] {
        let mut sp = [1.0; 3];
        sp[axis] = spacing;
        let grid = GridSpec::new([12, 12, 12], sp, [0.0; 3]).unwrap();
        let boxed = |off: usize| {
            let v: Vec<bool> = (0..grid.len())
                .map(|i| {
                    let c = grid.coords(i);
                    (0..3).all(|a| {
                        let lo = 2 + if a == axis { off } else { 0 };
                        c[a] >= lo && c[a] < lo + 5
                    })
                })
                .collect();
            BinaryMask::from_bools(grid, &v).unwrap()
        };
        let hd = hausdorff(&boxed(0), &boxed(3)).unwrap();
        assert!((hd - 3.0 * spacing).abs() < 1e-12, "axis {axis}: {hd}");
    }
}

#[test]
fn evaluate_case_policies() {
    let grid = GridSpec::new([4, 4, 4], [1.0, 2.0, 2.0], [0.0; 3]).unwrap();
    let mut r = vec![0; 64];
    r[grid.index(1, 1, 1)] = 10;
    let reference = LabelVolume::new(grid, r).unwrap();
    let empty = LabelVolume::zeros(grid).unwrap();

    let mut opts = EvalOptions::new(10, 44);
    let m = evaluate_case("c", "m", &reference, &empty, &opts).unwrap();
    assert_eq!(m.dsc, Some(0.0));
    assert!(!m.detected && m.hd_imputed);
    assert_eq!(m.hd_mm, Some(grid.diagonal_mm()));

    opts.policy = HdPolicy::Missing;
    let m = evaluate_case("c", "m", &reference, &empty, &opts).unwrap();
    assert_eq!((m.hd_mm, m.hd_imputed), (None, false));

    let both = evaluate_case("c", "m", &empty, &empty, &opts).unwrap();
    assert_eq!((both.dsc, both.hd_mm), (Some(1.0), Some(0.0)));

    let mut p = vec![0; 64];
    p[grid.index(1, 1, 1)] = 44;
    let pred = LabelVolume::new(grid, p).unwrap();
    let m = evaluate_case("c", "m", &reference, &pred, &opts).unwrap();
    assert_eq!((m.dsc, m.hd_mm, m.detected), (Some(1.0), Some(0.0), true));
    opts.min_voxels = 1;
    assert!(!evaluate_case("c", "m", &reference, &pred, &opts).unwrap().detected);
}

#[test]
fn evaluate_case_grid_mismatch() {
    let a = GridSpec::unit([4, 4, 4]).unwrap();
    let b = GridSpec::new([2, 2, 2], [2.0; 3], [0.5; 3]).unwrap();
    let reference = LabelVolume::new(a, vec![10; 64]).unwrap();
    let pred = LabelVolume::new(b, vec![44; 8]).unwrap();
    let mut opts = EvalOptions::new(10, 44);
    assert!(evaluate_case("c", "m", &reference, &pred, &opts).is_err());
    opts.auto_resample = true;
    let m = evaluate_case("c", "m", &reference, &pred, &opts).unwrap();
    assert_eq!(m.dsc, Some(1.0));
    assert_eq!(extract_mask(&reference, 10).count(), 64);
}
