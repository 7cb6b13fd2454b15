pub mod act;
pub mod bn;
pub mod conv;
pub mod dense;
pub mod pool;
pub mod resize;
pub mod shape;
