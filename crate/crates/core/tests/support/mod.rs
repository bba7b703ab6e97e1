pub mod envgen;
