//! Schnorr-type signatures whose signer performs no group operations.
//!
//! The signer derives its nonce scalar `r` from seeds and a counter and
//! publishes only a 16-byte tag `x` in place of the commitment `R = r·α`.
//! A verifier obtains `R` for `x` from `l` party servers, each holding a
//! seed and a table of public points. See [`scheme`] for the signature
//! itself, [`snod`] for the distributed nonce, and [`protocol`] for the
//! party wire protocol.

pub mod bench;
pub mod bpv;
pub mod energy;
pub mod error;
pub mod group;
pub mod kdf;
pub mod keystore;
pub mod protocol;
pub mod scheme;
pub mod schnorr;
pub mod sim;
pub mod snod;

pub use error::{Error, Result};
pub use group::{GroupElement, OpCounter, Scalar};
pub use scheme::{keygen, verify, verify_bytes, PublicKey, Signature, SigningKey, Verdict};
pub use snod::{KeyId, PartyShare, SnodParams};

pub type DeviceProfile = energy::DeviceProfile<f64>;
pub type SensorProfile = energy::SensorProfile<f64>;
pub type SchemeCost = energy::SchemeCost<f64>;
pub type DeviceProfileF32 = energy::DeviceProfile<f32>;
pub type SensorProfileF32 = energy::SensorProfile<f32>;
pub type SchemeCostF32 = energy::SchemeCost<f32>;
