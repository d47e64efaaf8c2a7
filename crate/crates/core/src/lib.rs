pub mod bench;
pub mod dldp;
pub mod he;
pub mod par;
pub mod pgm;
pub mod store;
pub mod varpir;
pub mod protocol;
