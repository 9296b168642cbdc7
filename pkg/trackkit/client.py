"""Clients for an external tracking model.

A request is one JSON object per line:

.. code-block:: json

    {"id": "...", "video_id": "...", "frames": ["..."], "mode": "box" | "expr",
     "init": "[a,b,c,d]" | "expression", "prompt_template": "..."}

and the response is :code:`{"id": "...", "per_frame": ["...", ...]}` with one
free text answer per frame.

Endpoints are given as

- :code:`tcp://HOST:PORT`: line protocol over a socket
- :code:`stdio:COMMAND`: line protocol over the standard streams of a subprocess
- :code:`http://...` or :code:`https://...`: one JSON POST per request

"""

from typing import Optional, Protocol, Callable, Awaitable
import json
import shlex
import asyncio
import logging
import dataclasses
from collections import Counter
from urllib.parse import urlparse

import aiohttp

from .models import TrackRequest, TrackResponse
from .util import dumps_json
from .errors import ClientError


def request_to_dict(req: TrackRequest) -> dict:
    return {k: v for k, v in dataclasses.asdict(req).items() if v is not None}


def response_from_dict(obj: dict, req: TrackRequest) -> TrackResponse:
    if not isinstance(obj, dict) or not isinstance(obj.get("per_frame"), list):
        raise ClientError(f"Bad response for request {req.id}: {obj!r:.200}")
    if str(obj.get("id")) != req.id:
        raise ClientError(f"Response id {obj.get('id')} doesn't match request {req.id}")
    return TrackResponse(id=req.id, per_frame=[str(x) for x in obj["per_frame"]])


class TrackingClient(Protocol):
    async def request(self, req: TrackRequest) -> TrackResponse:
        ...

    async def close(self) -> None:
        ...


class LineClient:
    """Line delimited JSON over a pair of asyncio streams.

    Only one request is in flight per connection. Responses to requests
    which timed out are discarded when they arrive late.

    Args:
        reader: Stream to read responses from
        writer: Stream to write requests to
        timeout: Seconds to wait for a response
        process: The subprocess at the other end, if any
        logger_name: Logger name for logging.

    """

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                 timeout: Optional[float] = None,
                 process: Optional[asyncio.subprocess.Process] = None,
                 logger_name: str = "trackkit"):
        self._reader = reader
        self._writer = writer
        self._timeout = timeout
        self._process = process
        self._lock = asyncio.Lock()
        self._late: Counter[str] = Counter()
        self._logger = logging.getLogger(logger_name)

    @property
    def logger(self):
        return self._logger

    @classmethod
    async def connect(cls, host: str, port: int, timeout: Optional[float] = None,
                      logger_name: str = "trackkit") -> "LineClient":
        reader, writer = await asyncio.open_connection(host, port)
        return cls(reader, writer, timeout, logger_name=logger_name)

    @classmethod
    async def spawn(cls, command: str, timeout: Optional[float] = None,
                    logger_name: str = "trackkit") -> "LineClient":
        process = await asyncio.create_subprocess_exec(*shlex.split(command),
                                                       stdin=asyncio.subprocess.PIPE,
                                                       stdout=asyncio.subprocess.PIPE)
        return cls(process.stdout, process.stdin, timeout, process, logger_name)  # type: ignore

    async def _read_response(self, req: TrackRequest) -> TrackResponse:
        while True:
            line = await self._reader.readline()
            if not line:
                raise ClientError(f"Connection closed before response to {req.id}")
            try:
                obj = json.loads(line)
            except json.decoder.JSONDecodeError as e:
                raise ClientError(f"Invalid JSON in response to {req.id}: {e}")
            stale_id = str(obj.get("id")) if isinstance(obj, dict) else None
            if stale_id != req.id and self._late[stale_id] > 0:
                self._late[stale_id] -= 1
                self.logger.debug(f"Discarding late response to {stale_id}")
                continue
            return response_from_dict(obj, req)

    async def request(self, req: TrackRequest) -> TrackResponse:
        async with self._lock:
            try:
                self._writer.write((dumps_json(request_to_dict(req)) + "\n").encode("utf-8"))
                await self._writer.drain()
                return await asyncio.wait_for(self._read_response(req), self._timeout)
            except asyncio.TimeoutError:
                # The answer may still arrive and must not be taken for the next one
                self._late[req.id] += 1
                raise ClientError(f"Request {req.id} timed out after {self._timeout}s")
            except OSError as e:
                raise ClientError(f"Request {req.id} failed: {type(e).__name__} {e}")

    async def close(self):
        self._writer.close()
        if self._process is not None:
            try:
                await asyncio.wait_for(self._process.wait(), 5)
            except asyncio.TimeoutError:
                self.logger.warning("Tracking process didn't exit, killing it")
                self._process.kill()
        else:
            try:
                await self._writer.wait_closed()
            except OSError:
                pass


class HTTPClient:
    """POST each request as JSON with an :class:`aiohttp.ClientSession`

    Args:
        url: Endpoint URL
        timeout: Client timeout in seconds
        headers: Extra headers, e.g. an API key

    """

    def __init__(self, url: str, timeout: Optional[float] = None,
                 headers: Optional[dict[str, str]] = None):
        self._url = url
        self._aio_timeout = aiohttp.ClientTimeout(timeout)
        self._headers = {"Content-Type": "application/json", **(headers or {})}
        self._session: Optional[aiohttp.ClientSession] = None

    async def _apost(self, session: aiohttp.ClientSession, data: dict) -> dict:
        resp = await session.request("POST", url=self._url, data=dumps_json(data))
        resp.raise_for_status()
        return await resp.json()

    async def request(self, req: TrackRequest) -> TrackResponse:
        if self._session is None:
            self._session = aiohttp.ClientSession(headers=self._headers,
                                                  timeout=self._aio_timeout)
        try:
            obj = await self._apost(self._session, request_to_dict(req))
        except (aiohttp.ClientError, asyncio.TimeoutError, json.decoder.JSONDecodeError) as e:
            raise ClientError(f"Request {req.id} failed: {type(e).__name__} {e}")
        return response_from_dict(obj, req)

    async def close(self):
        if self._session is not None:
            await self._session.close()
            self._session = None


ClientFactory = Callable[[], Awaitable[TrackingClient]]


def client_factory(endpoint: str, timeout: Optional[float] = None,
                   logger_name: str = "trackkit") -> ClientFactory:
    """Return a coroutine function which opens a new client for :code:`endpoint`"""
    if endpoint.startswith("stdio:"):
        command = endpoint[len("stdio:"):]

        async def spawn() -> TrackingClient:
            return await LineClient.spawn(command, timeout, logger_name)
        return spawn
    parsed = urlparse(endpoint)
    if parsed.scheme == "tcp":
        if not parsed.hostname or not parsed.port:
            raise ClientError(f"Endpoint {endpoint} needs a host and a port")

        async def connect() -> TrackingClient:
            return await LineClient.connect(parsed.hostname, parsed.port,  # type: ignore
                                            timeout, logger_name)
        return connect
    if parsed.scheme in {"http", "https"}:
        async def session() -> TrackingClient:
            return HTTPClient(endpoint, timeout)
        return session
    raise ClientError(f"Unknown endpoint {endpoint}")
