//! Application scenarios built on the generic machinery.

pub mod counting;
pub mod dispatch;
pub mod observer;
pub mod vdp;
