//! Quasi-morphisms on area-preserving maps of surfaces.
//!
//! Free-group counting quasi-morphisms ([`fgword`]), Hamiltonian flows on the
//! torus and the disc ([`hamflow`]), braid words of point pairs in the
//! punctured torus ([`punctured`]), the averaged quasi-morphism estimator
//! ([`ggqm`]) and the Moser/fragmentation toolkit ([`moserfrag`]).

pub mod error;
pub mod experiment;
pub mod fgword;
pub mod ggqm;
pub mod hamflow;
pub mod moserfrag;
pub mod punctured;

pub use error::{Error, Result};
