//! Continuum model of a re-entrant production line, `ρ_t + λ(W)ρ_x = 0` with
//! `W = ∫₀¹ρ dx` and controlled influx `λ(W)ρ(t,0) = u(t)`, together with
//! event-triggered and sampled-data boundary controllers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod experiments;
pub mod plant;
pub mod quadrature;
pub mod scheduler;
pub mod transport;
