#![allow(dead_code)]

pub mod eer_oracle;
pub mod fixtures;
pub mod grad_cases;
