"""HTTP surface of a node: block explorer plus agent preference endpoints.

Read endpoints are pure views over committed state. The one write -
preference updates from the web UI - must carry a signature over the
canonical preference payload by the account's key, unless the node runs in
dev mode and signs for its own accounts.

Addresses in URLs are 64 lowercase hex chars; energies are integer Wh,
monetary values integer micro-cents, prices integer milli-cents per kWh.
"""

from __future__ import annotations

import re
import time
from typing import Mapping

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .agent import HouseholdAgent, estimate_match_probability
from .explorer import Explorer, NotFound
from .identity import verify
from .ledger import Chain
from .market import Side, TariffConfig

__all__ = ["NodeFacade", "create_app"]

_ADDRESS_RE = re.compile(r"[0-9a-f]{64}\Z")


class PreferenceUpdate(BaseModel):
    max_buy_mct: int
    min_sell_mct: int | None = None
    updated_at: int | None = None
    signature: str | None = None


class NodeFacade:
    """What the HTTP layer needs from a running node, free of transport."""

    def __init__(
        self,
        chain: Chain,
        tariff: TariffConfig,
        explorer: Explorer,
        agents: Mapping[str, HouseholdAgent] | None = None,
        pubkeys: Mapping[str, bytes] | None = None,
        dev_sign: bool = False,
    ):
        self.chain = chain
        self.tariff = tariff
        self.explorer = explorer
        self.agents = dict(agents or {})
        self.pubkeys = dict(pubkeys or {})
        self.dev_sign = dev_sign


def _check_address(address: str) -> str:
    if not _ADDRESS_RE.match(address):
        raise HTTPException(status_code=400, detail="address must be 64 lowercase hex chars")
    return address


def create_app(facade: NodeFacade) -> FastAPI:
    app = FastAPI(title="gridmarket node", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    # -- explorer ---------------------------------------------------------

    @app.get("/status")
    def status():
        state = facade.chain.state
        return {
            "height": facade.chain.height,
            "current_interval_id": state.current_interval_id,
            "cleared_intervals": len(state.clearing_history),
            "tariff": facade.tariff.to_wire(),
            "interval_seconds": facade.chain.genesis.interval_seconds,
        }

    @app.get("/blocks/{height}")
    def get_block(height: int):
        try:
            block = facade.explorer.get_block(height)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        data = block.to_wire()
        data["block_hash"] = block.block_hash.hex()
        return data

    @app.get("/tx/{tx_hash}")
    def get_tx(tx_hash: str):
        try:
            raw = bytes.fromhex(tx_hash)
        except ValueError:
            raise HTTPException(status_code=400, detail="tx hash must be hex")
        try:
            tx, height, index = facade.explorer.get_tx(raw)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"tx": tx.to_wire(), "height": height, "index": index}

    @app.get("/accounts/{address}/trades")
    def get_trades(address: str, frm: int = Query(alias="from"), to: int = Query()):
        _check_address(address)
        try:
            records, settlements = facade.explorer.get_trades(address, frm, to)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "trades": [r.to_wire() for r in records],
            "settlements": [s.to_wire() for s in settlements],
        }

    @app.get("/accounts/{address}/kpis")
    def get_kpis(address: str, frm: int = Query(alias="from"), to: int = Query()):
        _check_address(address)
        try:
            return facade.explorer.kpis(address, frm, to).to_wire()
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/accounts/{address}/series")
    def get_series(
        address: str,
        frm: int = Query(alias="from"),
        to: int = Query(),
        resolution: str = "interval",
    ):
        _check_address(address)
        try:
            return facade.explorer.series(address, frm, to, resolution)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/market/intervals/{interval_id}")
    def get_interval(interval_id: int):
        try:
            result, book = facade.explorer.get_interval(interval_id)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        # the public book is anonymized: no account addresses
        def stripped(orders):
            return [
                {
                    "side": o.side.value,
                    "energy_wh": o.energy_wh,
                    "limit_price_mct": o.limit_price_mct,
                }
                for o in orders
            ]

        return {
            "result": result.to_wire(),
            "book": {
                "interval_id": book.interval_id,
                "buys": stripped(book.buys),
                "sells": stripped(book.sells),
            },
        }

    # -- agent ------------------------------------------------------------

    def _agent_for(address: str) -> HouseholdAgent:
        _check_address(address)
        agent = facade.agents.get(address)
        if agent is None:
            raise HTTPException(status_code=404, detail=f"no agent for {address}")
        return agent

    @app.get("/agent/{address}/preferences")
    def get_preferences(address: str):
        agent = _agent_for(address)
        return agent.preferences.to_wire()

    @app.post("/agent/{address}/preferences")
    def set_preferences(address: str, update: PreferenceUpdate):
        agent = _agent_for(address)
        updated_at = update.updated_at if update.updated_at is not None else int(time.time())
        payload = {
            "account": address,
            "max_buy_mct": update.max_buy_mct,
            "updated_at": updated_at,
        }
        if update.min_sell_mct is not None:
            payload["min_sell_mct"] = update.min_sell_mct
        if update.signature is not None:
            pubkey = facade.pubkeys.get(address)
            if pubkey is None or not verify(
                pubkey, payload, bytes.fromhex(update.signature)
            ):
                raise HTTPException(status_code=403, detail="bad preference signature")
        elif not facade.dev_sign:
            raise HTTPException(status_code=403, detail="signature required")
        prefs = agent.update_preferences(
            update.max_buy_mct, update.min_sell_mct, updated_at
        )
        return prefs.to_wire()

    @app.get("/agent/{address}/match_probability")
    def match_probability(address: str, side: str, limit: int):
        agent = _agent_for(address)
        try:
            parsed_side = Side(side.upper())
        except ValueError:
            raise HTTPException(status_code=400, detail="side must be BUY or SELL")
        history = facade.chain.state.book_history
        estimate = estimate_match_probability(
            parsed_side, limit, history, own_account=address
        )
        if estimate is None:
            return {"status": "UNKNOWN", "probability": None}
        return {"status": "OK", "probability": round(estimate, 6)}

    return app
