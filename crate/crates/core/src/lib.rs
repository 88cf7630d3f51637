//! Credit-guarantee ledger: a private-permissionless hash-chained ledger with
//! role-based admission, committee consensus, an encrypted content-addressed
//! document store and the guarantee life-cycle contracts.

pub mod canonical;
pub mod config;
pub mod consensus;
pub mod contracts;
pub mod crypto;
pub mod docstore;
pub mod ledger;
pub mod registry;
pub mod node;
pub mod scenario;
pub mod service;
