// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod convert;
pub mod eval;
pub mod report;
pub mod sample;
pub mod score;
pub mod synth;
pub mod train;
