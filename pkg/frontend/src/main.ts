import { ApiClient } from "./api";
import { createApp } from "./app";

const root = document.getElementById("app");
if (root) {
  // Served by the api-service itself, so all calls are same-origin.
  const app = createApp(root, new ApiClient(""));
  void app.start();
}
