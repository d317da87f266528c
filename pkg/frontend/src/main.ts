import { EditingClient } from "./client.js";
import { mountEditor } from "./dom.js";

const DEFAULT_SERVICE = "http://127.0.0.1:8000";

const root = document.getElementById("editor");
if (root) {
  const service =
    new URLSearchParams(window.location.search).get("service") ?? DEFAULT_SERVICE;
  mountEditor(root, new EditingClient(service));
}
