pub mod oracle;
pub mod table4;
pub mod gradcheck;
