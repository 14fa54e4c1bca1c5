#![allow(dead_code)]

pub mod conv;
pub mod files;
pub mod grad;
pub mod toy;
