import { App } from "./app";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8000";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const app = new App(root, baseUrl);

// handy for poking around from the console
(window as unknown as { app: App }).app = app;
