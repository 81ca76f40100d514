"""Network face: wire protocol, WebSocket/raw transports, server, CLI.

Import submodules directly (``wozlab.gateway.wire``, ``wozlab.gateway.server``);
this package init stays empty to keep import order acyclic.
"""
