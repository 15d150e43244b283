#![allow(dead_code)]

pub mod flops_oracle;
