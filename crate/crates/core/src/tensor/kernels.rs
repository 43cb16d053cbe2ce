//! Dense matrix kernels shared by forward and backward passes.
//!
//! All kernels accumulate along `k` in ascending order for every output
//! element, so results are bit-identical whether a kernel runs serially or
//! partitioned over rows by rayon.

use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Flop threshold below which kernels stay single-threaded; thread handoff
/// costs more than desk-scale matrices.
const PAR_THRESHOLD: usize = 1 << 22;

static KERNEL_THREADS: AtomicUsize = AtomicUsize::new(0);

/// Caps kernel parallelism. `0` leaves the rayon default in place.
/// The CLI wires `MVKT_THREADS` into this.
pub fn set_kernel_threads(n: usize) {
    KERNEL_THREADS.store(n, Ordering::Relaxed);
}

fn parallel_ok(flops: usize) -> bool {
    let cap = KERNEL_THREADS.load(Ordering::Relaxed);
    cap != 1 && flops >= PAR_THRESHOLD
}

/// C[n×m] = A[n×k] · B[k×m], row-major.
pub fn matmul_nn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    let row = |i: usize, out_row: &mut [f64]| {
        out_row.fill(0.0);
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * m..(p + 1) * m];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_ip * b_pj;
            }
        }
    };
    if parallel_ok(n * k * m) {
        out.par_chunks_mut(m).enumerate().for_each(|(i, r)| row(i, r));
    } else {
        for (i, r) in out.chunks_mut(m).enumerate() {
            row(i, r);
        }
    }
}

/// C[n×m] = A[n×k] · B[m×k]ᵀ (rows of B are dotted against rows of A).
pub fn matmul_nt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), m * k);
    debug_assert_eq!(out.len(), n * m);
    let row = |i: usize, out_row: &mut [f64]| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (x, y) in a_row.iter().zip(b_row.iter()) {
                s += x * y;
            }
            *o = s;
        }
    };
    if parallel_ok(n * k * m) {
        out.par_chunks_mut(m).enumerate().for_each(|(i, r)| row(i, r));
    } else {
        for (i, r) in out.chunks_mut(m).enumerate() {
            row(i, r);
        }
    }
}

/// C[k×m] = A[n×k]ᵀ · B[n×m].
pub fn matmul_tn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), n * m);
    debug_assert_eq!(out.len(), k * m);
    let row = |p: usize, out_row: &mut [f64]| {
        out_row.fill(0.0);
        for i in 0..n {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[i * m..(i + 1) * m];
            for (o, &b_ij) in out_row.iter_mut().zip(b_row.iter()) {
                *o += a_ip * b_ij;
            }
        }
    };
    if parallel_ok(n * k * m) {
        out.par_chunks_mut(m).enumerate().for_each(|(p, r)| row(p, r));
    } else {
        for (p, r) in out.chunks_mut(m).enumerate() {
            row(p, r);
        }
    }
}
