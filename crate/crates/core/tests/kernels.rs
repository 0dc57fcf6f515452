use blockspin_core::green::{window_operator, Window};
use blockspin_core::linalg::spectral_norm;
use blockspin_core::randomwalk::{rw_inverse, schur_bound, srl_check};
use nalgebra::DMatrix;

fn window(radius: i64) -> Window {
    let side = 2 * radius as usize + 3;
    Window {
        lo: [-radius, -radius],
        side: [side, side],
    }
}

#[test]
fn schur_bound_dominates_spectral_norm() {
    for seed in 0..20u64 {
        let m = DMatrix::from_fn(7, 5, |i, j| (((i * 13 + j * 7) as u64 * (seed + 3)) % 11) as f64 - 5.0);
        assert!(schur_bound(&m) >= spectral_norm(&m) * (1.0 - 1e-12));
    }
}

#[test]
fn remainder_blocks_shrink_with_box_size() {
    let w = window(24);
    let a = window_operator(&w, 3).unwrap();
    let small = rw_inverse(&a, w, 2, 6, 30, &[[0, 0]]).unwrap();
    let large = rw_inverse(&a, w, 2, 12, 30, &[[0, 0]]).unwrap();
    // the operator has finite range, so the off-diagonal leakage vanishes
    assert_eq!(small.max_offdiagonal_block, 0.0);
    // δ = 1 for a finite-range operator: doubling M̃ gains at least 2^{1/2}
    let gain = small.max_diagonal_block / large.max_diagonal_block;
    assert!(gain >= 0.9 * 2f64.sqrt(), "gain {gain}");
    assert!(large.r_norm < small.r_norm);
    for exp in [&small, &large] {
        assert!(exp.r_certificate >= exp.r_norm);
        assert!(exp.max_reference_error < 1e-10);
        // residuals fall geometrically at a rate near ‖R‖
        assert!(exp.residual_rate > 0.0 && exp.residual_rate <= 1.5 * exp.r_norm, "{exp:?}");
        assert!(exp.decay.unwrap().rate > 0.5);
    }
}

#[test]
fn probe_column_is_short_range_localizing() {
    let w = window(24);
    let a = window_operator(&w, 3).unwrap();
    let exp = rw_inverse(&a, w, 2, 6, 40, &[[0, 0]]).unwrap();
    let rate = exp.decay.unwrap().rate;
    let rep = srl_check(&|r| (-rate * r).exp(), 2, rate / 2.0, 0.25, 20).unwrap();
    assert!(rep.pass, "{rep:#?}");
}
