"""
Verifier objects, one per `verify` subcommand.

Each verifier has the same lifecycle: construct, `await start()`, any number
of `await run(config)` calls returning CheckReports, then `await stop()`.
`run()` never raises a library error; failures come back as reports.
"""
import asyncio

from .geometry_verifier import GeometryVerifier
from .multiplicity_verifier import MultiplicityVerifier
from .repulsion_verifier import RepulsionVerifier
from .volume_verifier import VolumeVerifier

VERIFIERS = {
    "verify geometry": GeometryVerifier,
    "verify repulsion": RepulsionVerifier,
    "verify volume": VolumeVerifier,
    "verify multiplicity": MultiplicityVerifier,
}


def run_async(coro):
    """Run a verifier coroutine to completion from synchronous code."""
    return asyncio.run(coro)


__all__ = ["GeometryVerifier", "MultiplicityVerifier", "RepulsionVerifier", "VolumeVerifier",
           "VERIFIERS", "run_async"]
