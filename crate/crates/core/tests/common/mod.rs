pub mod scg_toy;
