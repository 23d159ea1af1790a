import { createBridge } from "./app.js";
import { scorerFromEnv } from "./scorer.js";

const port = Number(process.env.PORT ?? 8090);
const scorer = scorerFromEnv();
const { app, ready } = createBridge(scorer);

app.listen(port, () => {
  console.log(`bridge listening on :${port} (model ${scorer.modelName}, loading)`);
});
ready
  .then(() => console.log(`model ${scorer.modelName} loaded`))
  .catch((err) => {
    console.error(`model load failed: ${err}`);
    process.exitCode = 1;
  });
