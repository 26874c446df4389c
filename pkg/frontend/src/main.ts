import { ApiClient } from "./api.js";
import { ChatApp } from "./ui.js";

function apiBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? "http://127.0.0.1:8000";
}

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (root) {
    new ChatApp(root, new ApiClient(apiBase()));
  }
});
