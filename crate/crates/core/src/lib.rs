//! Riemannian optimization on fixed-rank Tucker and tensor-train manifolds for
//! linear systems `A X = F` with `A = L + V`, where `L` is a Laplace-like
//! Kronecker sum and `V` a low-rank potential or coupling term.
//!
//! The crate is `no_std` with `alloc`. Enable the `std` feature to route large
//! dense products through an optimized GEMM.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod tensor;
pub mod tucker;
pub mod tt;
pub mod operators;
pub mod format;
pub mod solvers;
pub mod newton_tucker;
pub mod newton_tt;
pub mod als;
