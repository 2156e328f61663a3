pub mod fd;
pub mod kraus;
