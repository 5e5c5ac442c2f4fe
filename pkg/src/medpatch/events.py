from typing import Dict, List

from medpatch.result import Ok, Result
from medpatch.types import EventHandler, Object


class Dispatcher(Object):
    """
    Routes instrumentation events to registered handlers.

    Events are fire-and-forget: a dispatch without any listener succeeds.
    Handlers are registered under "source" (all events of a source) or
    "source/name" (one event), e.g. "queue/buffered" or "trainer".
    """
    def __init__(self):
        super().__init__()
        self._event_handlers: Dict[str, List[EventHandler]] = {}

    def init(self) -> Result[None]:
        return Ok(None)

    def register_event_handler(self, key: str, handler: EventHandler) -> Result[None]:
        handlers = self._event_handlers.setdefault(key, [])
        if handler not in handlers:
            handlers.append(handler)
        return Ok(None)

    def unregister_event_handler(self, key: str, handler: EventHandler) -> Result[None]:
        handlers = self._event_handlers.get(key, [])
        if handler in handlers:
            handlers.remove(handler)
        if not handlers:
            self._event_handlers.pop(key, None)
        return Ok(None)

    def dispatch_event(self, event: dict) -> Result[None]:
        """Dispatch to "source/name" handlers first, then "source" handlers.

        event dict:
        "source": emitting component (mandatory)
        "name": event name (mandatory)
        "data": payload (optional)
        """
        source = event.get("source")
        name = event.get("name")
        if not source or not name:
            return Result.error(f"malformed event, 'source' and 'name' are required: {event}")

        for key in (f"{source}/{name}", source):
            for handler in self._event_handlers.get(key, []):
                res = handler.handle_event(event)
                if not res:
                    return Result.error(f"event handler failed on {source}/{name}", res)
        return Ok(None)

    def emit(self, source: str, name: str, data=None) -> Result[None]:
        return self.dispatch_event({"source": source, "name": name, "data": data})

    def dispose(self) -> Result[None]:
        self._event_handlers.clear()
        return Ok(None)
