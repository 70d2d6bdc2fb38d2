//! Parsing and serialization: the XML model format, the expression and
//! declaration grammar, domain files, and the configuration file.

pub mod config;
pub mod domain;
pub mod resolve;
pub mod text;
pub mod xml;

pub use config::{read_config, write_config, Config, ConfigError, MergeConfig};
pub use domain::{read_domain, write_domain, DomainFileError};
pub use resolve::{document_of, parse_model, resolve, serialize_model, ParseError};
pub use xml::{parse_document, serialize_document, SpecDocument, XmlError};
