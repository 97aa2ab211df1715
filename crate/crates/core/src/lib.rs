pub mod attention;
pub mod bench;
pub mod generation;
pub mod midi;
pub mod model;
pub mod tensor;
pub mod training;
pub mod verify;
