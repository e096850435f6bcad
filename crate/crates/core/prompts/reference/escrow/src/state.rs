use cosmwasm_schema::cw_serde;
use cosmwasm_std::{Addr, Uint128};
use cw_storage_plus::{Item, Map};

#[cw_serde]
pub struct Config {
    pub arbiter: Addr,
}

#[cw_serde]
pub struct Escrow {
    pub id: u64,
    pub depositor: Addr,
    pub beneficiary: Addr,
    pub amount: Uint128,
    pub released: bool,
}

pub const CONFIG: Item<Config> = Item::new("config");
pub const NEXT_ID: Item<u64> = Item::new("next_id");
pub const ESCROWS: Map<u64, Escrow> = Map::new("escrows");
