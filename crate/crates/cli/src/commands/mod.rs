pub mod check;
pub mod eval;
pub mod generate;
pub mod sweep;
pub mod train;
pub mod verify_lemmas;
