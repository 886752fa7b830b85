pub mod diffusion;
pub mod eval;
pub mod hypercore;
pub mod io;
pub mod linalg;
pub mod niche;
pub mod pipeline;
pub mod signal;
pub mod synth;
pub mod wavelets;
