#![allow(dead_code)]

pub mod kat;
pub mod wire;
