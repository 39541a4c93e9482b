pub mod numerics;
pub mod toc;
pub mod device;
pub mod lindblad;
pub mod metrics;
pub mod experiments;
