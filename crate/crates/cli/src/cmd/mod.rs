pub mod compare;
pub mod fit;
pub mod sample;
pub mod stub;
pub mod sweep2d;
pub mod taxonomy;
pub mod validate;
