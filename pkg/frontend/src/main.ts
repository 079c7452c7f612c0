import { CampaignApi } from "./api.js";
import { Dashboard } from "./dashboard.js";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const api = new CampaignApi("");
  const params = new URLSearchParams(window.location.search);
  let id = params.get("campaign");
  if (!id) {
    const created = await api.createCampaign({});
    id = created.id;
    const url = new URL(window.location.href);
    url.searchParams.set("campaign", id);
    window.history.replaceState(null, "", url.toString());
  }
  const dash = new Dashboard(api, root, window.localStorage);
  await dash.load(id);
  await dash.refreshHistory();
  await dash.refreshManifold();
}

void boot();
