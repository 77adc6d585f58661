pub mod models;
pub mod poly;
pub mod sdp;
pub mod sosprog;
pub mod synthesis;
