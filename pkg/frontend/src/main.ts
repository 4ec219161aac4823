import { ApiClient } from "./api.js";
import { bindApp } from "./app.js";
import { attachShortcuts } from "./keyboard.js";

declare global {
  interface Window {
    SWARMDISC_API_BASE?: string;
  }
}

const base = window.SWARMDISC_API_BASE ?? "";
const client = new ApiClient(base);
const app = bindApp(client, document);
attachShortcuts(app, document);
void app.start();
