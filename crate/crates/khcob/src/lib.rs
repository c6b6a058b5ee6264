//! Khovanov homology over the integers and the induced maps of link
//! cobordisms, presented as movies of elementary events between planar
//! diagrams. Bridge diagrams and their moves compile down to movies.

pub mod algebra;
pub mod bridge;
pub mod cobordism;
pub mod diagram;
pub mod khovanov;
